/**
 * App shell: session list (left), message thread (center), task description
 * (right), closed-prompt buttons next to the input, thumbs + comment per
 * response. Talks to the service only through TutorApi.
 */

import { ApiError, TutorApi, buildMessagePayload } from './api.js';
import * as state from './state.js';
import { renderClosedPromptButtons, renderMessageHtml, renderRatingControls } from './render.js';
import type { FeedbackType, Session, TaskSummary } from './types.js';

const api = new TutorApi('');
let tasks: TaskSummary[] = [];
let currentTask: TaskSummary | null = null;
let thread = state.initialState();

const TOKEN_KEY = 'tutorkit-student-token';
const DRAFT_KEY = 'tutorkit-draft';

function studentToken(): string | null {
  return localStorage.getItem(TOKEN_KEY);
}

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function setBanner(text: string | null, retry?: () => void) {
  const banner = el<HTMLDivElement>('banner');
  banner.innerHTML = '';
  banner.hidden = !text;
  if (!text) return;
  banner.append(text);
  if (retry) {
    const btn = document.createElement('button');
    btn.textContent = 'retry';
    btn.onclick = retry;
    banner.append(' ', btn);
  }
}

// -- rendering ---------------------------------------------------------------

function renderTaskPane() {
  const pane = el<HTMLDivElement>('task-pane');
  if (!currentTask) {
    pane.innerHTML = '<p class="hint">Pick a task to begin.</p>';
    return;
  }
  pane.innerHTML =
    `<h2>${currentTask.title}</h2>` +
    renderMessageHtml(currentTask.description) +
    `<p class="tags">${currentTask.concept_tags.join(' · ')}</p>`;
}

function renderSessionList(sessions: Session[]) {
  const list = el<HTMLUListElement>('session-list');
  list.innerHTML = '';
  for (const session of sessions) {
    const item = document.createElement('li');
    const active = thread.session?.session_id === session.session_id;
    item.className = active ? 'session active' : 'session';
    const title = tasks.find((t) => t.task_id === session.task_id)?.title ?? session.task_id;
    item.textContent = `${title} (${session.turns.length - 1})`;
    item.onclick = () => resumeSession(session.session_id);
    list.append(item);
  }
}

function renderThread() {
  const container = el<HTMLDivElement>('thread');
  container.innerHTML = '';
  for (const row of state.visibleThread(thread)) {
    if (row.kind !== 'greeting' && row.prompt) {
      const bubble = document.createElement('div');
      bubble.className = 'bubble student';
      bubble.innerHTML = renderMessageHtml(row.prompt);
      container.append(bubble);
    }
    const bubble = document.createElement('div');
    bubble.className = row.kind === 'pending' ? 'bubble tutor pending' : 'bubble tutor';
    bubble.innerHTML = renderMessageHtml(row.response);
    if (row.turn && row.turn.index > 0) {
      const controls = document.createElement('div');
      controls.innerHTML = renderRatingControls(
        row.turn.turn_id,
        state.displayedRating(thread, row.turn),
      );
      bubble.append(controls);
    }
    container.append(bubble);
  }
  container.scrollTop = container.scrollHeight;

  const gate = thread.busy || !thread.session;
  el<HTMLTextAreaElement>('prompt-input').disabled = gate;
  el<HTMLButtonElement>('send-btn').disabled = gate;
  document
    .querySelectorAll<HTMLButtonElement>('.closed-prompt')
    .forEach((b) => (b.disabled = gate));
  if (thread.error) {
    setBanner(thread.error);
  }
}

// -- actions -----------------------------------------------------------------

async function refreshSessions() {
  const token = studentToken();
  if (!token) {
    renderSessionList([]);
    return;
  }
  try {
    renderSessionList(await api.listSessions(token));
  } catch {
    // list refresh is cosmetic; leave the current list alone
  }
}

async function startSession(task: TaskSummary) {
  currentTask = task;
  try {
    const session = await api.createSession(task.task_id, studentToken());
    localStorage.setItem(TOKEN_KEY, session.anonymous_student_id);
    thread = state.openSession(thread, session);
    setBanner(null);
    renderTaskPane();
    renderThread();
    await refreshSessions();
  } catch (err) {
    setBanner('The tutor is unreachable. Your draft is kept.', () => startSession(task));
  }
}

async function resumeSession(sessionId: string) {
  try {
    const session = await api.getSession(sessionId);
    currentTask = tasks.find((t) => t.task_id === session.task_id) ?? null;
    thread = state.openSession(thread, session);
    setBanner(null);
    renderTaskPane();
    renderThread();
    await refreshSessions();
  } catch {
    setBanner('Could not reopen that session.', () => resumeSession(sessionId));
  }
}

async function sendPrompt(mode: 'open' | 'closed', closedType?: FeedbackType) {
  if (!thread.session || thread.busy) return;
  const sessionId = thread.session.session_id;
  const input = el<HTMLTextAreaElement>('prompt-input');
  const codeInput = el<HTMLTextAreaElement>('code-input');
  const text = input.value.trim();
  if (mode === 'open' && !text) return;

  const payload = buildMessagePayload(mode, {
    closedType,
    text,
    studentCode: codeInput.value,
  });
  const shownPrompt =
    mode === 'closed' ? `[${closedType}] button` : text + (payload.student_code ? '\n(code attached)' : '');
  thread = state.startPrompt(thread, shownPrompt);
  renderThread();

  try {
    const turn = await api.sendMessage(sessionId, payload, (chunk) => {
      thread = state.appendChunk(thread, chunk);
      renderThread();
    });
    thread = state.finishTurn(thread, turn);
    input.value = '';
    codeInput.value = '';
    localStorage.removeItem(DRAFT_KEY);
    setBanner(null);
  } catch (err) {
    if (err instanceof ApiError && err.code === 'NeedsCode') {
      thread = state.failTurn(thread, '');
      thread = { ...thread, error: null };
      setBanner('This prompt needs your current code: paste it into the code box.');
    } else {
      // Draft input survives; the student can retry.
      thread = state.failTurn(thread, 'The tutor could not answer. Try again.');
    }
  }
  renderThread();
  await refreshSessions();
}

async function flushQueuedRatings() {
  const [next, queued] = state.takeQueuedRatings(thread);
  thread = next;
  for (const entry of queued) {
    await submitRating(entry.turnId, entry.thumb, entry.comment);
  }
}

async function submitRating(turnId: string, thumb: 'up' | 'down', comment?: string) {
  thread = state.rateOptimistically(thread, turnId, thumb, comment);
  renderThread();
  try {
    await api.rateTurn(turnId, thumb, comment);
    thread = state.confirmRating(thread, turnId);
  } catch {
    thread = state.queueRating(thread, turnId, thumb, comment);
    setBanner('Rating queued; it will be retried.', () => void flushQueuedRatings());
  }
  renderThread();
}

// -- wiring --------------------------------------------------------------------

function wireInput() {
  el<HTMLDivElement>('closed-prompts').innerHTML = renderClosedPromptButtons();
  document.querySelectorAll<HTMLButtonElement>('.closed-prompt').forEach((button) => {
    button.addEventListener('click', () => {
      const ft = button.dataset.feedbackType as FeedbackType;
      void sendPrompt('closed', ft);
    });
  });
  el<HTMLButtonElement>('send-btn').addEventListener('click', () => void sendPrompt('open'));
  const input = el<HTMLTextAreaElement>('prompt-input');
  input.addEventListener('input', () => localStorage.setItem(DRAFT_KEY, input.value));
  input.addEventListener('keydown', (event) => {
    if (event.key === 'Enter' && !event.shiftKey) {
      event.preventDefault();
      void sendPrompt('open');
    }
  });
  const draft = localStorage.getItem(DRAFT_KEY);
  if (draft) input.value = draft;

  document.body.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    if (target.classList.contains('copy-btn')) {
      void navigator.clipboard.writeText(target.dataset.code ?? '');
      return;
    }
    if (target.classList.contains('thumb')) {
      const turnId = target.closest<HTMLElement>('.rating')!.dataset.turnId!;
      void submitRating(turnId, target.dataset.thumb as 'up' | 'down');
      return;
    }
    if (target.classList.contains('comment-btn')) {
      const turnId = target.closest<HTMLElement>('.rating')!.dataset.turnId!;
      const comment = window.prompt('Your comment on this response:') ?? '';
      if (comment.trim()) {
        const current = state.displayedRating(
          thread,
          thread.session!.turns.find((t) => t.turn_id === turnId)!,
        );
        void submitRating(turnId, current ?? 'down', comment.trim());
      }
    }
  });
}

async function boot() {
  wireInput();
  try {
    tasks = await api.listTasks();
  } catch {
    setBanner('The tutor is unreachable. Reconnecting keeps your draft.', () => void boot());
    return;
  }
  const picker = el<HTMLDivElement>('task-picker');
  picker.innerHTML = '';
  for (const task of tasks) {
    const button = document.createElement('button');
    button.className = 'task-choice';
    button.textContent = task.title;
    button.onclick = () => void startSession(task);
    picker.append(button);
  }
  renderTaskPane();
  renderThread();
  await refreshSessions();
}

document.addEventListener('DOMContentLoaded', () => void boot());
