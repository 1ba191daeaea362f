// Ranking for the article picker: known articles from the server's
// inventory, prefix matches before substring matches, frequency-ranked
// within each group; free-text entry is always allowed on top.

import { ArticleEntry } from './api.js';

export type PickerRow = {
  article: string;
  count: number;
  freeText: boolean;
};

export function rankArticles(
  known: ArticleEntry[],
  query: string,
  limit = 12
): PickerRow[] {
  const trimmed = query.trim();
  const byCount = (a: ArticleEntry, b: ArticleEntry) =>
    b.count - a.count || a.article.localeCompare(b.article);
  let ranked: ArticleEntry[];
  if (trimmed === '') {
    ranked = [...known].sort(byCount);
  } else {
    const needle = trimmed.toLowerCase();
    const prefix = known.filter((entry) =>
      entry.article.toLowerCase().startsWith(needle)
    );
    const substring = known.filter(
      (entry) =>
        !entry.article.toLowerCase().startsWith(needle) &&
        entry.article.toLowerCase().includes(needle)
    );
    ranked = [...prefix.sort(byCount), ...substring.sort(byCount)];
  }
  const rows: PickerRow[] = ranked
    .slice(0, limit)
    .map((entry) => ({ ...entry, freeText: false }));
  const exactKnown = known.some((entry) => entry.article === trimmed);
  if (trimmed !== '' && !exactKnown) {
    rows.push({ article: trimmed, count: 0, freeText: true });
  }
  return rows;
}
