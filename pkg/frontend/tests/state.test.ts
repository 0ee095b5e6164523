import { describe, expect, it } from 'vitest';

import * as state from '../src/state.js';
import type { Session, Turn } from '../src/types.js';

function turn(index: number, overrides: Partial<Turn> = {}): Turn {
  return {
    turn_id: `s1-t${String(index).padStart(4, '0')}`,
    session_id: 's1',
    index,
    mode: 'open',
    closed_type: null,
    prompt_text: index === 0 ? '' : `prompt ${index}`,
    response_text: `response ${index}`,
    rating: null,
    comment: null,
    response_error: false,
    ...overrides,
  };
}

function session(turns: Turn[]): Session {
  return {
    session_id: 's1',
    anonymous_student_id: 'tok',
    task_id: 'happy_strings',
    started_at: '2025-01-13T00:00:00Z',
    turns,
  };
}

describe('thread ordering', () => {
  it('renders greeting first, turns by index, regardless of arrival order', () => {
    let s = state.openSession(state.initialState(), session([turn(2), turn(0), turn(1)]));
    const rows = state.visibleThread(s);
    expect(rows.map((r) => r.kind)).toEqual(['greeting', 'turn', 'turn']);
    expect(rows[1].prompt).toBe('prompt 1');
    expect(rows[2].prompt).toBe('prompt 2');
  });

  it('two views of the same session render identical order', () => {
    const a = state.openSession(state.initialState(), session([turn(1), turn(0)]));
    const b = state.openSession(state.initialState(), session([turn(0), turn(1)]));
    expect(state.visibleThread(a)).toEqual(state.visibleThread(b));
  });
});

describe('one in-flight prompt per session', () => {
  it('gates input while busy and appends streamed chunks', () => {
    let s = state.openSession(state.initialState(), session([turn(0)]));
    s = state.startPrompt(s, 'hello?');
    expect(s.busy).toBe(true);
    expect(() => state.startPrompt(s, 'again')).toThrow(/in-flight/);
    s = state.appendChunk(s, 'par');
    s = state.appendChunk(s, 'tial');
    const rows = state.visibleThread(s);
    expect(rows.at(-1)).toMatchObject({ kind: 'pending', response: 'partial' });
  });

  it('finishTurn stores the turn and releases the gate', () => {
    let s = state.openSession(state.initialState(), session([turn(0)]));
    s = state.startPrompt(s, 'q');
    s = state.finishTurn(s, turn(1));
    expect(s.busy).toBe(false);
    expect(s.session?.turns).toHaveLength(2);
    expect(state.visibleThread(s).at(-1)?.kind).toBe('turn');
  });

  it('failTurn releases the gate and reports the error', () => {
    let s = state.openSession(state.initialState(), session([turn(0)]));
    s = state.startPrompt(s, 'q');
    s = state.failTurn(s, 'backend down');
    expect(s.busy).toBe(false);
    expect(s.error).toBe('backend down');
    expect(state.visibleThread(s)).toHaveLength(1); // nothing half-stored
  });
});

describe('ratings', () => {
  it('shows the optimistic value until the ack reconciles it', () => {
    const stored = turn(1);
    let s = state.openSession(state.initialState(), session([turn(0), stored]));
    s = state.rateOptimistically(s, stored.turn_id, 'up');
    expect(state.displayedRating(s, stored)).toBe('up');
    s = state.confirmRating(s, stored.turn_id);
    expect(s.session?.turns[1].rating).toBe('up');
    expect(s.optimisticRatings[stored.turn_id]).toBeUndefined();
  });

  it('re-rating shows last write', () => {
    const stored = turn(1, { rating: 'up' });
    let s = state.openSession(state.initialState(), session([turn(0), stored]));
    s = state.rateOptimistically(s, stored.turn_id, 'down', 'confidently wrong');
    expect(state.displayedRating(s, stored)).toBe('down');
    s = state.confirmRating(s, stored.turn_id);
    expect(s.session?.turns[1]).toMatchObject({ rating: 'down', comment: 'confidently wrong' });
  });

  it('queues failed ratings for retry', () => {
    let s = state.openSession(state.initialState(), session([turn(0), turn(1)]));
    s = state.queueRating(s, 's1-t0001', 'up');
    const [drained, queued] = state.takeQueuedRatings(s);
    expect(queued).toEqual([{ turnId: 's1-t0001', thumb: 'up', comment: undefined }]);
    expect(drained.queuedRatings).toEqual([]);
  });
});
