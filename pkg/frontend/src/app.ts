/** Application shell: state, server sync, and full re-render on every change.
 *
 * The rendered UI is a pure function of (last server responses, local draft);
 * refreshing the page reproduces the identical view.
 */

import {
  ApiError,
  EntityTypeInfo,
  PredictResponse,
  StoredSupport,
  WorkspaceClient,
} from "./api.js";
import { buildSupportPayload, snapSelectionToTokens, tokenize } from "./tokens.js";
import {
  renderEntityTypes,
  renderPrediction,
  renderRevision,
  renderSupportList,
} from "./views.js";

export interface AppState {
  revision: number;
  entityTypes: EntityTypeInfo[];
  supports: StoredSupport[];
  lastPrediction: PredictResponse | null;
  selectedTraceId: string | null;
  staleRevision: boolean;
  error: string | null;
  hint: string | null;
  draft: {
    sentence: string;
    entityType: string;
    selection: { start: number; end: number } | null;
    query: string;
  };
}

export function initialState(): AppState {
  return {
    revision: 0,
    entityTypes: [],
    supports: [],
    lastPrediction: null,
    selectedTraceId: null,
    staleRevision: false,
    error: null,
    hint: null,
    draft: { sentence: "", entityType: "", selection: null, query: "" },
  };
}

export class App {
  state: AppState = initialState();

  constructor(
    private readonly client: WorkspaceClient,
    private readonly root: HTMLElement,
  ) {}

  private doc(): Document {
    return this.root.ownerDocument;
  }

  async refresh(): Promise<void> {
    const [types, supports] = await Promise.all([
      this.client.listEntityTypes(),
      this.client.listSupports(),
    ]);
    this.state.entityTypes = types.entity_types;
    this.state.supports = supports.supports;
    this.state.revision = supports.revision;
    this.state.staleRevision = false;
    this.render();
  }

  /** Compare a response revision against the last known one; warn when the
   * workspace moved underneath us (another editor is active). */
  private observeRevision(revision: number): void {
    this.state.staleRevision = revision > this.state.revision + 1;
    this.state.revision = revision;
  }

  updateDraft(patch: Partial<AppState["draft"]>): void {
    this.state.draft = { ...this.state.draft, ...patch };
    this.render();
  }

  selectionFromCharacters(charStart: number, charEnd: number): void {
    const snap = snapSelectionToTokens(this.state.draft.sentence, charStart, charEnd);
    this.state.draft.selection = snap ? { start: snap.start, end: snap.end } : null;
    this.state.hint = snap?.snapped ? "selection snapped to token boundaries" : null;
    this.render();
  }

  canSaveSupport(): boolean {
    const { sentence, entityType, selection } = this.state.draft;
    return tokenize(sentence).length > 0 && entityType.trim().length > 0 && selection !== null;
  }

  async saveSupport(): Promise<void> {
    if (!this.canSaveSupport()) {
      return;
    }
    const { sentence, entityType, selection } = this.state.draft;
    try {
      const payload = buildSupportPayload(
        sentence,
        { ...selection!, snapped: false },
        entityType.trim(),
      );
      const response = await this.client.addSupport(payload);
      this.observeRevision(response.revision);
      this.state.error = null;
      this.state.draft.selection = null;
      await this.refresh();
    } catch (error) {
      this.fail(error);
    }
  }

  async deleteSupport(supportId: string): Promise<void> {
    try {
      const response = await this.client.deleteSupport(supportId);
      this.observeRevision(response.revision);
      await this.refresh();
      if (this.state.draft.query) {
        await this.predict();
      }
    } catch (error) {
      this.fail(error);
    }
  }

  async deleteEntityType(name: string): Promise<void> {
    try {
      const response = await this.client.deleteEntityType(name);
      this.observeRevision(response.revision);
      await this.refresh();
    } catch (error) {
      this.fail(error);
    }
  }

  async predict(): Promise<void> {
    const tokens = tokenize(this.state.draft.query);
    if (tokens.length === 0) {
      return;
    }
    try {
      const response = await this.client.predict(tokens);
      this.observeRevision(response.revision);
      this.state.lastPrediction = response;
      this.state.selectedTraceId = null;
      this.state.error = null;
      this.state.hint = null;
      this.render();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.state.lastPrediction = null;
        this.state.hint = "workspace is empty: add a support example to get predictions";
        this.render();
        return;
      }
      this.fail(error);
    }
  }

  selectTrace(supportId: string): void {
    this.state.selectedTraceId = supportId;
    this.render();
  }

  private fail(error: unknown): void {
    this.state.error =
      error instanceof ApiError ? `${error.code}: ${error.message}` : String(error);
    this.render();
  }

  render(): void {
    const doc = this.doc();
    this.root.textContent = "";

    const header = doc.createElement("header");
    header.appendChild(renderRevision(doc, this.state.revision, this.state.staleRevision));
    if (this.state.error) {
      const err = doc.createElement("p");
      err.className = "error";
      err.textContent = this.state.error;
      header.appendChild(err);
    }
    if (this.state.hint) {
      const hint = doc.createElement("p");
      hint.className = "hint";
      hint.textContent = this.state.hint;
      header.appendChild(hint);
    }
    this.root.appendChild(header);

    const typesSection = doc.createElement("section");
    typesSection.id = "entity-types";
    typesSection.appendChild(
      renderEntityTypes(doc, this.state.entityTypes, (name) => void this.deleteEntityType(name)),
    );
    this.root.appendChild(typesSection);

    const supportsSection = doc.createElement("section");
    supportsSection.id = "supports";
    supportsSection.appendChild(
      renderSupportList(doc, this.state.supports, {
        onDelete: (id) => void this.deleteSupport(id),
        highlightId: this.state.selectedTraceId,
      }),
    );
    this.root.appendChild(supportsSection);

    const predictionSection = doc.createElement("section");
    predictionSection.id = "prediction";
    if (this.state.lastPrediction) {
      predictionSection.appendChild(
        renderPrediction(doc, this.state.lastPrediction.prediction, (id) =>
          this.selectTrace(id),
        ),
      );
    }
    this.root.appendChild(predictionSection);
  }
}
