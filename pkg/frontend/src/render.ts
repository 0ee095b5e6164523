/**
 * HTML fragment builders. Pure string -> string functions so escaping and
 * the button row can be unit-tested without a DOM.
 */

import { CLOSED_PROMPT_BUTTONS } from './api.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

/**
 * Minimal message formatter: fenced code blocks become <pre><code> with a
 * copy button, everything else is escaped prose with preserved line breaks.
 * Code contents are carried verbatim (escaped, never re-wrapped).
 */
export function renderMessageHtml(text: string): string {
  const parts: string[] = [];
  const fence = /```[a-zA-Z0-9_+-]*\n([\s\S]*?)```/g;
  let last = 0;
  let match;
  while ((match = fence.exec(text)) !== null) {
    if (match.index > last) {
      parts.push(`<p>${escapeHtml(text.slice(last, match.index)).replace(/\n/g, '<br>')}</p>`);
    }
    parts.push(
      `<div class="code-block"><button class="copy-btn" data-code="${escapeHtml(
        match[1],
      )}">copy</button><pre><code>${escapeHtml(match[1])}</code></pre></div>`,
    );
    last = match.index + match[0].length;
  }
  if (last < text.length) {
    parts.push(`<p>${escapeHtml(text.slice(last)).replace(/\n/g, '<br>')}</p>`);
  }
  return parts.join('');
}

/** The closed-prompt button row: exactly the six offerable feedback types. */
export function renderClosedPromptButtons(): string {
  return CLOSED_PROMPT_BUTTONS.map(
    (b) =>
      `<button class="closed-prompt" data-feedback-type="${b.feedbackType}" ` +
      `data-needs-code="${b.needsCode}" title="${escapeHtml(b.tooltip)}">${escapeHtml(
        b.label,
      )}</button>`,
  ).join('');
}

export function renderRatingControls(
  turnId: string,
  rating: 'up' | 'down' | null,
): string {
  const upCls = rating === 'up' ? 'thumb active' : 'thumb';
  const downCls = rating === 'down' ? 'thumb active' : 'thumb';
  return (
    `<span class="rating" data-turn-id="${escapeHtml(turnId)}">` +
    `<button class="${upCls}" data-thumb="up" aria-label="thumbs up">&#128077;</button>` +
    `<button class="${downCls}" data-thumb="down" aria-label="thumbs down">&#128078;</button>` +
    `<button class="comment-btn" aria-label="leave a comment">&#128172;</button></span>`
  );
}
