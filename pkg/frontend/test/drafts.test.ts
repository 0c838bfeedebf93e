import { describe, expect, it } from "vitest";

import { DraftStore, type StorageLike } from "../src/drafts.js";

class FakeStorage implements StorageLike {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
  keys(): string[] {
    return Array.from(this.data.keys());
  }
}

describe("DraftStore", () => {
  it("persists updates and restores them in a fresh store (reload survival)", () => {
    const backend = new FakeStorage();
    const store = new DraftStore(backend, "batch-1", "ann1");
    store.update("P1", { label: "VAD", comment: "roof gone" });
    store.update("P2", { skipped: true });

    const reloaded = new DraftStore(backend, "batch-1", "ann1");
    const drafts = reloaded.load();
    expect(drafts.P1).toEqual({ label: "VAD", comment: "roof gone", skipped: false });
    expect(drafts.P2.skipped).toBe(true);
  });

  it("scopes drafts per batch and annotator", () => {
    const backend = new FakeStorage();
    new DraftStore(backend, "batch-1", "ann1").update("P1", { label: "VAD" });
    expect(new DraftStore(backend, "batch-2", "ann1").load()).toEqual({});
    expect(new DraftStore(backend, "batch-1", "ann2").load()).toEqual({});
    expect(backend.keys()).toEqual(["vadtriage-draft:batch-1:ann1"]);
  });

  it("clear removes only its own key", () => {
    const backend = new FakeStorage();
    const mine = new DraftStore(backend, "batch-1", "ann1");
    const theirs = new DraftStore(backend, "batch-1", "ann2");
    mine.update("P1", { label: "VAD" });
    theirs.update("P9", { label: "NotVAD" });
    mine.clear();
    expect(mine.load()).toEqual({});
    expect(theirs.load().P9.label).toBe("NotVAD");
  });

  it("tolerates corrupted payloads", () => {
    const backend = new FakeStorage();
    backend.setItem("vadtriage-draft:batch-1:ann1", "{not json");
    expect(new DraftStore(backend, "batch-1", "ann1").load()).toEqual({});
  });
});
