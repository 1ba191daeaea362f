// Bootstrap: wire the store to the DOM and the keyboard.

import { ArticleEntry, ReviewApi } from './api.js';
import { rankArticles } from './picker.js';
import {
  renderControls,
  renderError,
  renderQueue,
  renderStats
} from './render.js';
import { ReviewStore } from './store.js';

const params = new URLSearchParams(window.location.search);
const serverUrl = params.get('server') ?? 'http://127.0.0.1:8077';
const annotator = params.get('annotator') ?? 'reviewer';

const api = new ReviewApi(serverUrl);
const store = new ReviewStore(api, annotator);

let knownArticles: ArticleEntry[] = [];

function root(): HTMLElement {
  const el = document.getElementById('app');
  if (el === null) throw new Error('missing #app container');
  return el;
}

function render(): void {
  const { items, activeIndex, stats, error } = store.state;
  root().innerHTML =
    renderError(error) +
    renderStats(stats) +
    renderQueue(items, activeIndex) +
    renderControls(store.activeItem);
  refreshPicker();
}

function assignInput(): HTMLInputElement | null {
  return document.getElementById('assign-article') as HTMLInputElement | null;
}

function refreshPicker(): void {
  const input = assignInput();
  const datalist = document.getElementById('article-options');
  if (input === null || datalist === null) return;
  const rows = rankArticles(knownArticles, input.value);
  datalist.innerHTML = rows
    .map(
      (row) =>
        `<option value="${row.article.replace(/"/g, '&quot;')}">` +
        `${row.freeText ? 'new article' : `seen ${row.count}×`}</option>`
    )
    .join('');
}

async function submit(action: 'accept' | 'reject' | 'assign'): Promise<void> {
  const article = action === 'assign' ? assignInput()?.value ?? null : null;
  await store.submit(action, article);
}

function onClick(event: Event): void {
  const target = event.target as HTMLElement;
  const action = target.dataset.action;
  if (action === 'accept' || action === 'reject' || action === 'assign') {
    void submit(action);
  } else if (action === 'retry') {
    void store.load();
  }
  const row = target.closest('[data-item-id]') as HTMLElement | null;
  if (row !== null) {
    const index = store.state.items.findIndex(
      (item) => item.item_id === row.dataset.itemId
    );
    if (index >= 0) {
      store.state.activeIndex = index;
      render();
    }
  }
}

function onKey(event: KeyboardEvent): void {
  if (event.target instanceof HTMLInputElement) {
    if (event.key === 'Enter') void submit('assign');
    if (event.key === 'Escape') (event.target as HTMLInputElement).blur();
    refreshPicker();
    return;
  }
  switch (event.key) {
    case 'a':
      void submit('accept');
      break;
    case 'r':
      void submit('reject');
      break;
    case 'j':
      store.next();
      break;
    case 'k':
      store.prev();
      break;
    case 'n':
      assignInput()?.focus();
      event.preventDefault();
      break;
  }
}

store.subscribe(render);
document.addEventListener('click', onClick);
document.addEventListener('keydown', onKey);
document.addEventListener('input', (event) => {
  if ((event.target as HTMLElement).id === 'assign-article') refreshPicker();
});

void (async () => {
  await store.load();
  try {
    knownArticles = await api.articles();
  } catch {
    knownArticles = [];
  }
  render();
})();
