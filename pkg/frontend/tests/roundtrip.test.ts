/** Full editor round trip against captured real-server responses.
 *
 * The fixture (tests/fixtures/roundtrip.json) is generated by
 * scripts/make_ui_fixtures.py from the actual serving stack, so the DOM
 * assertions here compare against byte-faithful server behaviour: annotate,
 * save, query, trace, delete the top-trace example, observe the prediction
 * change — all without any restart.
 */
import { beforeEach, describe, expect, it } from "vitest";

import { WorkspaceClient, type FetchLike } from "../src/api.js";
import { App } from "../src/app.js";
import { tokenOffsets } from "../src/tokens.js";

import fixture from "./fixtures/roundtrip.json";

function json(data: unknown, status = 200): Response {
  return new Response(JSON.stringify(data), {
    status,
    headers: { "content-type": "application/json" },
  });
}

class FixtureServer {
  added = 0;
  deleted = false;
  postedPayloads: unknown[] = [];
  deletedIds: string[] = [];

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^.*\/workspaces\/[^/]+/, "");
    if (method === "GET" && path === "/entity-types") {
      return json(this.deleted ? fixture.entity_types_after : fixture.entity_types);
    }
    if (method === "GET" && path === "/supports") {
      return json(this.deleted ? fixture.supports_after : fixture.supports_listing);
    }
    if (method === "POST" && path === "/supports") {
      const body = JSON.parse(String(init?.body));
      this.postedPayloads.push(body);
      const response = fixture.assigned[this.added];
      this.added += 1;
      return json(response, 201);
    }
    if (method === "DELETE" && path.startsWith("/supports/")) {
      this.deletedIds.push(decodeURIComponent(path.slice("/supports/".length)));
      this.deleted = true;
      return json(fixture.delete_response);
    }
    if (method === "POST" && path === "/predict") {
      if (this.added === 0) {
        return json({ code: "empty_workspace", message: "no supports" }, 409);
      }
      return json(this.deleted ? fixture.prediction_after : fixture.prediction_before);
    }
    return json({ code: "not_found", message: `no route ${method} ${path}` }, 404);
  };
}

function spanSummaries(root: HTMLElement) {
  return [...root.querySelectorAll<HTMLElement>("#prediction .span-card")].map((card) => ({
    entity_type: card.dataset.entityType,
    start: Number(card.dataset.start),
    end: Number(card.dataset.end),
    trace: [...card.querySelectorAll<HTMLElement>("tr.trace-entry")].map(
      (row) => row.dataset.supportId,
    ),
  }));
}

function expectedSummaries(response: typeof fixture.prediction_before) {
  return response.prediction.spans.map((span) => ({
    entity_type: span.entity_type,
    start: span.start,
    end: span.end,
    trace: span.trace.map((t) => t.support_id),
  }));
}

describe("editor round trip on real-server fixtures", () => {
  let server: FixtureServer;
  let app: App;
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app") as HTMLElement;
    server = new FixtureServer();
    const client = new WorkspaceClient("http://test", "fixture", server.fetch);
    app = new App(client, root);
  });

  async function annotateAll(): Promise<void> {
    for (const payload of fixture.support_payloads) {
      const sentence = payload.tokens.join(" ");
      const offsets = tokenOffsets(sentence);
      app.updateDraft({ sentence, entityType: payload.entity_type });
      app.selectionFromCharacters(
        offsets[payload.entity_start].start,
        offsets[payload.entity_end].end,
      );
      expect(app.canSaveSupport()).toBe(true);
      await app.saveSupport();
    }
  }

  it("empty workspace prediction shows the onboarding hint", async () => {
    app.updateDraft({ query: fixture.query_tokens.join(" ") });
    await app.predict();
    expect(root.textContent).toContain("add a support example");
  });

  it("annotating in the browser posts the exact support JSON schema", async () => {
    await annotateAll();
    expect(server.postedPayloads).toEqual(fixture.support_payloads);
    // stored examples render back with the same highlight
    const supportItems = root.querySelectorAll<HTMLElement>("#supports li.support");
    expect(supportItems.length).toBe(fixture.supports_listing.supports.length);
    const first = supportItems[0];
    const mark = first.querySelector<HTMLElement>("mark.span-highlight")!;
    expect(Number(mark.dataset.start)).toBe(fixture.supports_listing.supports[0].entity_start);
    expect(Number(mark.dataset.end)).toBe(fixture.supports_listing.supports[0].entity_end);
  });

  it("querying renders the server prediction and its traces verbatim", async () => {
    await annotateAll();
    app.updateDraft({ query: fixture.query_tokens.join(" ") });
    await app.predict();
    expect(spanSummaries(root)).toEqual(expectedSummaries(fixture.prediction_before));
    // highlighted query tokens match the prediction spans
    const marks = root.querySelectorAll("#prediction mark.span-highlight.predicted");
    expect(marks.length).toBe(fixture.prediction_before.prediction.spans.length);
  });

  it("clicking a trace entry highlights the contributing support example", async () => {
    await annotateAll();
    app.updateDraft({ query: fixture.query_tokens.join(" ") });
    await app.predict();
    const row = root.querySelector<HTMLElement>("#prediction tr.trace-entry")!;
    const supportId = row.dataset.supportId!;
    row.click();
    const selected = root.querySelector<HTMLElement>("#supports li.trace-selected");
    expect(selected?.dataset.supportId).toBe(supportId);
  });

  it("deleting the top-trace example changes the prediction without a restart", async () => {
    await annotateAll();
    app.updateDraft({ query: fixture.query_tokens.join(" ") });
    await app.predict();
    const before = spanSummaries(root);
    const revisionBefore = app.state.revision;

    const gameCard = [...root.querySelectorAll<HTMLElement>("#prediction .span-card")].find(
      (card) => card.dataset.entityType === "GAME",
    )!;
    const topTraceId = (gameCard.querySelector("tr.trace-entry") as HTMLElement).dataset
      .supportId!;
    expect(topTraceId).toBe(fixture.top_trace_support_id);

    await app.deleteSupport(topTraceId);

    expect(server.deletedIds).toEqual([fixture.top_trace_support_id]);
    const after = spanSummaries(root);
    expect(after).toEqual(expectedSummaries(fixture.prediction_after));
    expect(after).not.toEqual(before);
    expect(app.state.revision).toBeGreaterThan(revisionBefore);
    // the deleted example no longer appears in the support list
    const ids = [...root.querySelectorAll<HTMLElement>("#supports li.support")].map(
      (item) => item.dataset.supportId,
    );
    expect(ids).not.toContain(fixture.top_trace_support_id);
  });
});
