/**
 * Pure view-state logic for the chat shell. Everything here is DOM-free so
 * the ordering, optimistic-rating, and input-gating rules are unit-testable.
 */

import type { Session, Turn } from './types.js';

export interface ThreadState {
  session: Session | null;
  /** Text streamed for the in-flight turn, if any. */
  pendingResponse: string | null;
  pendingPrompt: string | null;
  /** One in-flight prompt per session: input stays disabled while true. */
  busy: boolean;
  /** Ratings shown optimistically before the server ack lands. */
  optimisticRatings: Record<string, { thumb: 'up' | 'down'; comment?: string }>;
  /** Ratings that failed to send and wait for a retry. */
  queuedRatings: Array<{ turnId: string; thumb: 'up' | 'down'; comment?: string }>;
  error: string | null;
}

export function initialState(): ThreadState {
  return {
    session: null,
    pendingResponse: null,
    pendingPrompt: null,
    busy: false,
    optimisticRatings: {},
    queuedRatings: [],
    error: null,
  };
}

export function openSession(state: ThreadState, session: Session): ThreadState {
  return { ...initialState(), session };
}

export function startPrompt(state: ThreadState, promptText: string): ThreadState {
  if (state.busy) throw new Error('one in-flight prompt per session');
  return { ...state, busy: true, pendingPrompt: promptText, pendingResponse: '', error: null };
}

export function appendChunk(state: ThreadState, text: string): ThreadState {
  return { ...state, pendingResponse: (state.pendingResponse ?? '') + text };
}

export function finishTurn(state: ThreadState, turn: Turn): ThreadState {
  const session = state.session
    ? { ...state.session, turns: [...state.session.turns, turn] }
    : null;
  return { ...state, session, busy: false, pendingPrompt: null, pendingResponse: null };
}

export function failTurn(state: ThreadState, message: string): ThreadState {
  // Draft input is preserved by the caller; we only release the gate.
  return { ...state, busy: false, pendingResponse: null, pendingPrompt: null, error: message };
}

export function rateOptimistically(
  state: ThreadState,
  turnId: string,
  thumb: 'up' | 'down',
  comment?: string,
): ThreadState {
  return {
    ...state,
    optimisticRatings: { ...state.optimisticRatings, [turnId]: { thumb, comment } },
  };
}

export function confirmRating(state: ThreadState, turnId: string): ThreadState {
  if (!state.session) return state;
  const pending = state.optimisticRatings[turnId];
  if (!pending) return state;
  const turns = state.session.turns.map((t) =>
    t.turn_id === turnId ? { ...t, rating: pending.thumb, comment: pending.comment ?? null } : t,
  );
  const optimistic = { ...state.optimisticRatings };
  delete optimistic[turnId];
  return { ...state, session: { ...state.session, turns }, optimisticRatings: optimistic };
}

export function queueRating(
  state: ThreadState,
  turnId: string,
  thumb: 'up' | 'down',
  comment?: string,
): ThreadState {
  return {
    ...state,
    queuedRatings: [...state.queuedRatings, { turnId, thumb, comment }],
  };
}

export function takeQueuedRatings(state: ThreadState): [ThreadState, ThreadState['queuedRatings']] {
  return [{ ...state, queuedRatings: [] }, state.queuedRatings];
}

/** Rating shown for a turn: optimistic value wins until reconciled. */
export function displayedRating(state: ThreadState, turn: Turn): 'up' | 'down' | null {
  return state.optimisticRatings[turn.turn_id]?.thumb ?? turn.rating;
}

/** Thread in render order: stored turns (greeting first), then the in-flight pair. */
export function visibleThread(state: ThreadState): Array<{
  kind: 'greeting' | 'turn' | 'pending';
  prompt?: string;
  response: string;
  turn?: Turn;
}> {
  const rows: Array<{ kind: 'greeting' | 'turn' | 'pending'; prompt?: string; response: string; turn?: Turn }> = [];
  if (!state.session) return rows;
  const ordered = [...state.session.turns].sort((a, b) => a.index - b.index);
  for (const turn of ordered) {
    if (turn.index === 0) {
      rows.push({ kind: 'greeting', response: turn.response_text, turn });
    } else {
      rows.push({ kind: 'turn', prompt: turn.prompt_text, response: turn.response_text, turn });
    }
  }
  if (state.busy && state.pendingPrompt !== null) {
    rows.push({ kind: 'pending', prompt: state.pendingPrompt, response: state.pendingResponse ?? '' });
  }
  return rows;
}
