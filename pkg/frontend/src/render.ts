// HTML-producing render functions, kept pure so they can be tested
// without a DOM. main.ts injects the output and delegates events.

import { ReviewItem, Stats, Suggestion } from './api.js';

const RULE_BADGES: Record<number, string> = {
  1: 'exact text, in-corpus',
  2: 'exact text, anywhere',
  3: 'head, in-corpus',
  4: 'head, anywhere'
};

export function badgeLabel(suggestion: Suggestion): string {
  return RULE_BADGES[suggestion.rule_level] ?? `rule ${suggestion.rule_level}`;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function renderSuggestion(suggestion: Suggestion | null): string {
  if (suggestion === null) {
    return '<span class="badge badge-none">no suggestion</span>';
  }
  return (
    `<span class="badge badge-level-${suggestion.rule_level}" ` +
    `title="support: ${suggestion.support_count}">` +
    `${escapeHtml(suggestion.article)} · ${badgeLabel(suggestion)} · ` +
    `${suggestion.support_count}</span>`
  );
}

export function renderItem(item: ReviewItem, active: boolean): string {
  const classes = active ? 'item active' : 'item';
  return (
    `<li class="${classes}" data-item-id="${escapeHtml(item.item_id)}">` +
    `<span class="context">${escapeHtml(item.left_context)}</span> ` +
    `<strong class="mention">${escapeHtml(item.mention_text)}</strong> ` +
    `<span class="context">${escapeHtml(item.right_context)}</span>` +
    `<div class="meta">${escapeHtml(item.doc_id)} / ` +
    `${escapeHtml(item.sent_id)} · head ${escapeHtml(item.head_lemma)}</div>` +
    `<div class="suggestion">${renderSuggestion(item.suggestion)}</div>` +
    `</li>`
  );
}

export function renderQueue(items: ReviewItem[], activeIndex: number): string {
  if (items.length === 0) {
    return '<p class="all-resolved">All resolved — nothing left to review.</p>';
  }
  const rows = items
    .map((item, index) => renderItem(item, index === activeIndex))
    .join('');
  return `<ul class="queue">${rows}</ul>`;
}

export function renderControls(item: ReviewItem | null): string {
  if (item === null) return '';
  const hasSuggestion = item.suggestion !== null;
  const acceptReject = hasSuggestion
    ? '<button data-action="accept" accesskey="a">Accept (a)</button>' +
      '<button data-action="reject" accesskey="r">Reject (r)</button>'
    : '';
  return (
    `<div class="controls">${acceptReject}` +
    '<input type="text" id="assign-article" list="article-options" ' +
    'placeholder="article identifier…">' +
    '<datalist id="article-options"></datalist>' +
    '<button data-action="assign">Assign (n)</button></div>'
  );
}

export function renderStats(stats: Stats | null): string {
  if (stats === null) return '';
  const levels = Object.entries(stats.per_rule_level)
    .map(([level, count]) => `L${level}: ${count}`)
    .join(' · ');
  const coverage = (stats.coverage * 100).toFixed(1);
  return (
    `<div class="stats">pending ${stats.pending} · ` +
    `resolved ${stats.resolved} · coverage ${coverage}% · ${levels}</div>`
  );
}

export function renderError(error: string | null): string {
  if (error === null) return '';
  return (
    `<div class="error-banner">${escapeHtml(error)} ` +
    '<button data-action="retry">Retry</button></div>'
  );
}
