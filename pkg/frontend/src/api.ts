// Typed client for the review-server HTTP API. All entity data flows
// through these calls; the UI holds no authoritative state of its own.

export type Suggestion = {
  article: string;
  rule_level: number;
  support_count: number;
};

export type ReviewItem = {
  item_id: string;
  doc_id: string;
  sent_id: string;
  start: number;
  end: number;
  mention_text: string;
  head_lemma: string;
  corpus_id: string;
  left_context: string;
  right_context: string;
  status: 'pending' | 'resolved';
  decision_id: string | null;
  accepted_article: string | null;
  suggestion: Suggestion | null;
};

export type Stats = {
  pending: number;
  resolved: number;
  coverage: number;
  per_rule_level: Record<string, number>;
};

export type ArticleEntry = {
  article: string;
  count: number;
};

export type DecisionAction = 'accept' | 'reject' | 'assign';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init)
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ApiError(0, `server unreachable: ${String(err)}`);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const message =
        typeof body === 'object' && body !== null && 'error' in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return body as T;
  }

  async health(): Promise<boolean> {
    const body = await this.request<{ status: string }>('/health');
    return body.status === 'ok';
  }

  async queue(limit?: number): Promise<ReviewItem[]> {
    const query = limit === undefined ? '' : `?limit=${limit}`;
    const body = await this.request<{ items: ReviewItem[] }>(`/queue${query}`);
    return body.items;
  }

  async stats(): Promise<Stats> {
    return this.request<Stats>('/stats');
  }

  async articles(): Promise<ArticleEntry[]> {
    const body = await this.request<{ articles: ArticleEntry[] }>('/articles');
    return body.articles;
  }

  async decide(
    itemId: string,
    action: DecisionAction,
    article: string | null,
    annotator: string
  ): Promise<ReviewItem> {
    const body = await this.request<{ item: ReviewItem }>('/decision', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({
        item_id: itemId,
        action,
        article: article ?? undefined,
        annotator
      })
    });
    return body.item;
  }
}
