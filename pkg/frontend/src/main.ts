/** Browser entry point: binds the form controls to the App shell. */

import { WorkspaceClient } from "./api.js";
import { App } from "./app.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

function must<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function start(): App {
  const client = new WorkspaceClient(param("server", ""), param("workspace", "default"));
  const app = new App(client, must<HTMLElement>("app"));

  const sentence = must<HTMLTextAreaElement>("support-sentence");
  const entityType = must<HTMLInputElement>("support-entity-type");
  const saveButton = must<HTMLButtonElement>("save-support");
  const query = must<HTMLInputElement>("query");
  const predictButton = must<HTMLButtonElement>("run-predict");

  const syncSaveButton = () => {
    saveButton.disabled = !app.canSaveSupport();
  };

  sentence.addEventListener("input", () => {
    app.updateDraft({ sentence: sentence.value, selection: null });
    syncSaveButton();
  });
  sentence.addEventListener("select", () => {
    app.selectionFromCharacters(sentence.selectionStart ?? 0, sentence.selectionEnd ?? 0);
    syncSaveButton();
  });
  entityType.addEventListener("input", () => {
    app.updateDraft({ entityType: entityType.value });
    syncSaveButton();
  });
  saveButton.addEventListener("click", () => void app.saveSupport().then(syncSaveButton));
  query.addEventListener("input", () => app.updateDraft({ query: query.value }));
  predictButton.addEventListener("click", () => void app.predict());

  syncSaveButton();
  void app.refresh();
  return app;
}

declare global {
  interface Window {
    spanmatchApp?: App;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.spanmatchApp = start();
}
