// UI state machine. At most one decision is in flight; optimistic updates
// roll back on anything but a 200, and a 409 (someone else resolved the
// item) refreshes the queue instead. Reloading the page rebuilds the whole
// state from the server, so nothing here is authoritative.

import {
  ApiError,
  DecisionAction,
  ReviewApi,
  ReviewItem,
  Stats
} from './api.js';

export type UiState = {
  items: ReviewItem[];
  activeIndex: number;
  decisionInFlight: boolean;
  stats: Stats | null;
  error: string | null;
  loaded: boolean;
};

export type SubmitOutcome =
  | 'applied'
  | 'conflict-refreshed'
  | 'rejected-recomputed'
  | 'invalid'
  | 'failed';

export class ReviewStore {
  state: UiState = {
    items: [],
    activeIndex: 0,
    decisionInFlight: false,
    stats: null,
    error: null,
    loaded: false
  };

  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: ReviewApi,
    private readonly annotator: string = 'reviewer'
  ) {}

  subscribe(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get activeItem(): ReviewItem | null {
    return this.state.items[this.state.activeIndex] ?? null;
  }

  async load(): Promise<void> {
    try {
      const [items, stats] = await Promise.all([
        this.api.queue(),
        this.api.stats()
      ]);
      this.state.items = items;
      this.state.stats = stats;
      this.state.activeIndex = Math.min(
        this.state.activeIndex,
        Math.max(0, items.length - 1)
      );
      this.state.error = null;
      this.state.loaded = true;
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    }
    this.emit();
  }

  next(): void {
    if (this.state.activeIndex < this.state.items.length - 1) {
      this.state.activeIndex += 1;
      this.emit();
    }
  }

  prev(): void {
    if (this.state.activeIndex > 0) {
      this.state.activeIndex -= 1;
      this.emit();
    }
  }

  /** One user action, exactly one POST /decision. */
  async submit(
    action: DecisionAction,
    article: string | null = null
  ): Promise<SubmitOutcome> {
    const item = this.activeItem;
    if (item === null || this.state.decisionInFlight) return 'invalid';
    if (action === 'assign' && (article === null || article.trim() === '')) {
      this.state.error = 'assign needs an article identifier';
      this.emit();
      return 'invalid';
    }
    if (action !== 'assign' && item.suggestion === null) {
      this.state.error = `nothing to ${action}: the item has no suggestion`;
      this.emit();
      return 'invalid';
    }

    const snapshotItems = [...this.state.items];
    const snapshotIndex = this.state.activeIndex;
    this.state.decisionInFlight = true;
    this.state.error = null;
    const resolves = action !== 'reject';
    if (resolves) {
      // optimistic: drop the item now, roll back on failure
      this.state.items = this.state.items.filter(
        (candidate) => candidate.item_id !== item.item_id
      );
      this.state.activeIndex = Math.min(
        snapshotIndex,
        Math.max(0, this.state.items.length - 1)
      );
    }
    this.emit();

    try {
      const updated = await this.api.decide(
        item.item_id,
        action,
        action === 'assign' ? (article as string).trim() : null,
        this.annotator
      );
      if (!resolves) {
        // reject keeps the item pending with a recomputed suggestion
        this.state.items = this.state.items.map((candidate) =>
          candidate.item_id === updated.item_id ? updated : candidate
        );
      }
      this.state.decisionInFlight = false;
      await this.refreshQuietly();
      this.emit();
      return resolves ? 'applied' : 'rejected-recomputed';
    } catch (err) {
      this.state.decisionInFlight = false;
      if (err instanceof ApiError && err.status === 409) {
        // already resolved elsewhere: trust the server, not our optimism
        await this.load();
        return 'conflict-refreshed';
      }
      this.state.items = snapshotItems;
      this.state.activeIndex = snapshotIndex;
      this.state.error = err instanceof Error ? err.message : String(err);
      this.emit();
      return 'failed';
    }
  }

  /** Pull fresh queue + stats without clobbering the cursor position. */
  private async refreshQuietly(): Promise<void> {
    try {
      const [items, stats] = await Promise.all([
        this.api.queue(),
        this.api.stats()
      ]);
      const activeId = this.activeItem?.item_id ?? null;
      this.state.items = items;
      this.state.stats = stats;
      const index =
        activeId === null
          ? this.state.activeIndex
          : items.findIndex((candidate) => candidate.item_id === activeId);
      this.state.activeIndex = Math.max(
        0,
        Math.min(index < 0 ? this.state.activeIndex : index, items.length - 1)
      );
    } catch {
      // a refresh failure never loses the decision we just made
    }
  }
}
