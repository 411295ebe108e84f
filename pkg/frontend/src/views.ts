/** Pure DOM builders: every view is a function of server data plus local draft.
 *
 * No scoring happens here; every number shown is taken verbatim from the
 * server's prediction JSON.
 */

import type { EntityTypeInfo, PredictedSpan, Prediction, StoredSupport, TraceEntry } from "./api.js";

export interface SpanHighlight {
  start: number;
  end: number;
  entityType: string;
  cssClass?: string;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Render tokens with inclusive span highlights; spans must not overlap. */
export function renderTokens(
  doc: Document,
  tokens: string[],
  spans: SpanHighlight[],
): HTMLElement {
  const container = el(doc, "div", "tokens");
  const byStart = new Map<number, SpanHighlight>();
  for (const span of spans) byStart.set(span.start, span);
  let i = 0;
  while (i < tokens.length) {
    const span = byStart.get(i);
    if (span) {
      const wrapper = el(doc, "mark", `span-highlight ${span.cssClass ?? ""}`.trim());
      wrapper.dataset.entityType = span.entityType;
      wrapper.dataset.start = String(span.start);
      wrapper.dataset.end = String(span.end);
      for (let j = span.start; j <= span.end && j < tokens.length; j += 1) {
        const tok = el(doc, "span", "token", tokens[j]);
        tok.dataset.index = String(j);
        wrapper.appendChild(tok);
      }
      const label = el(doc, "sup", "entity-label", span.entityType);
      wrapper.appendChild(label);
      container.appendChild(wrapper);
      i = span.end + 1;
    } else {
      const tok = el(doc, "span", "token", tokens[i]);
      tok.dataset.index = String(i);
      container.appendChild(tok);
      i += 1;
    }
  }
  return container;
}

export function renderEntityTypes(
  doc: Document,
  types: EntityTypeInfo[],
  onDelete?: (name: string) => void,
): HTMLElement {
  const list = el(doc, "ul", "entity-types");
  for (const t of types) {
    const item = el(doc, "li", "entity-type");
    item.dataset.name = t.name;
    item.appendChild(el(doc, "span", "entity-type-name", t.name));
    item.appendChild(el(doc, "span", "entity-type-count", String(t.count)));
    if (onDelete) {
      const button = el(doc, "button", "delete-type", "delete");
      button.addEventListener("click", () => onDelete(t.name));
      item.appendChild(button);
    }
    list.appendChild(item);
  }
  return list;
}

export function renderSupportList(
  doc: Document,
  supports: StoredSupport[],
  options?: {
    onDelete?: (supportId: string) => void;
    highlightId?: string | null;
  },
): HTMLElement {
  const list = el(doc, "ul", "supports");
  for (const s of supports) {
    const item = el(doc, "li", "support");
    item.dataset.supportId = s.support_id;
    if (options?.highlightId === s.support_id) {
      item.classList.add("trace-selected");
    }
    item.appendChild(
      renderTokens(doc, s.tokens, [
        { start: s.entity_start, end: s.entity_end, entityType: s.entity_type },
      ]),
    );
    item.appendChild(el(doc, "code", "support-id", s.support_id));
    if (options?.onDelete) {
      const button = el(doc, "button", "delete-support", "remove");
      button.addEventListener("click", () => options.onDelete!(s.support_id));
      item.appendChild(button);
    }
    list.appendChild(item);
  }
  return list;
}

export function renderTrace(
  doc: Document,
  span: PredictedSpan,
  onEntryClick?: (supportId: string) => void,
): HTMLElement {
  const table = el(doc, "table", "trace");
  const head = el(doc, "tr");
  for (const title of ["support", "start dot", "end dot", "attention"]) {
    head.appendChild(el(doc, "th", undefined, title));
  }
  table.appendChild(head);
  span.trace.forEach((entry: TraceEntry) => {
    const row = el(doc, "tr", "trace-entry");
    row.dataset.supportId = entry.support_id;
    row.appendChild(el(doc, "td", "trace-support-id", entry.support_id));
    row.appendChild(el(doc, "td", undefined, entry.start_dot.toFixed(4)));
    row.appendChild(el(doc, "td", undefined, entry.end_dot.toFixed(4)));
    row.appendChild(el(doc, "td", undefined, entry.attention_weight.toFixed(4)));
    if (onEntryClick) {
      row.addEventListener("click", () => onEntryClick(entry.support_id));
    }
    table.appendChild(row);
  });
  return table;
}

export function renderPrediction(
  doc: Document,
  prediction: Prediction,
  onTraceClick?: (supportId: string) => void,
): HTMLElement {
  const panel = el(doc, "div", "prediction");
  if (prediction.truncated) {
    panel.appendChild(el(doc, "p", "truncation-warning", "query was truncated"));
  }
  panel.appendChild(
    renderTokens(
      doc,
      prediction.query_tokens,
      prediction.spans.map((s) => ({
        start: s.start,
        end: s.end,
        entityType: s.entity_type,
        cssClass: "predicted",
      })),
    ),
  );
  if (prediction.spans.length === 0) {
    panel.appendChild(el(doc, "p", "no-entities", "no entities recognized"));
    return panel;
  }
  for (const span of prediction.spans) {
    const card = el(doc, "div", "span-card");
    card.dataset.entityType = span.entity_type;
    card.dataset.start = String(span.start);
    card.dataset.end = String(span.end);
    const title = `${span.entity_type} [${span.start}, ${span.end}] score ${span.span_score.toFixed(4)}`;
    card.appendChild(el(doc, "h3", "span-title", title));
    card.appendChild(renderTrace(doc, span, onTraceClick));
    panel.appendChild(card);
  }
  return panel;
}

export function renderRevision(doc: Document, revision: number, stale: boolean): HTMLElement {
  const badge = el(doc, "span", stale ? "revision stale" : "revision", `revision ${revision}`);
  if (stale) {
    badge.appendChild(el(doc, "em", "stale-warning", " (stale: workspace changed, refresh)"));
  }
  return badge;
}
