/**
 * Local label drafts, keyed per (batch, annotator), persisted in a
 * Storage-like backend (localStorage in the browser) so a reload restores
 * in-progress work until the server accepts it.
 */

import type { DraftEntry } from "./model.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class DraftStore {
  constructor(
    private backend: StorageLike,
    private batchId: string,
    private annotatorId: string,
  ) {}

  private key(): string {
    return `vadtriage-draft:${this.batchId}:${this.annotatorId}`;
  }

  load(): Record<string, DraftEntry> {
    const raw = this.backend.getItem(this.key());
    if (!raw) return {};
    try {
      return JSON.parse(raw) as Record<string, DraftEntry>;
    } catch {
      return {};
    }
  }

  save(drafts: Record<string, DraftEntry>): void {
    this.backend.setItem(this.key(), JSON.stringify(drafts));
  }

  update(parcelId: string, entry: Partial<DraftEntry>): Record<string, DraftEntry> {
    const drafts = this.load();
    const current: DraftEntry = drafts[parcelId] ?? { comment: "", skipped: false };
    drafts[parcelId] = { ...current, ...entry };
    this.save(drafts);
    return drafts;
  }

  clear(): void {
    this.backend.removeItem(this.key());
  }
}
