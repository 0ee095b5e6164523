/**
 * Typed client for the tutoring service HTTP/SSE API.
 *
 * Holds no secrets: the only credential is the anonymous bearer token the
 * service mints for the student, kept in localStorage by the app shell.
 */

import type {
  ApiErrorBody,
  FeedbackType,
  MessagePayload,
  Session,
  StreamEvent,
  TaskSummary,
} from './types.js';

export class ApiError extends Error {
  code: string;
  turnId?: string;

  constructor(body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.turnId = body.turn_id;
  }
}

/** The six closed prompts, in the order they render next to the input. */
export const CLOSED_PROMPT_BUTTONS: ReadonlyArray<{
  feedbackType: FeedbackType;
  label: string;
  tooltip: string;
  needsCode: boolean;
}> = [
  {
    feedbackType: 'KTC',
    label: 'Task constraints',
    tooltip: 'What exactly does the task require?',
    needsCode: false,
  },
  {
    feedbackType: 'KC',
    label: 'Concepts',
    tooltip: 'Which programming concepts do I need?',
    needsCode: false,
  },
  {
    feedbackType: 'KM',
    label: 'My mistakes',
    tooltip: 'Point out mistakes in my code (attach code)',
    needsCode: true,
  },
  {
    feedbackType: 'KH',
    label: 'Next step',
    tooltip: 'How should I proceed from here?',
    needsCode: false,
  },
  {
    feedbackType: 'KP',
    label: 'My progress',
    tooltip: 'How far along is my attempt? (attach code)',
    needsCode: true,
  },
  {
    feedbackType: 'KR',
    label: 'Check result',
    tooltip: 'Is my solution correct? (attach code)',
    needsCode: true,
  },
];

export function buildMessagePayload(
  mode: 'open' | 'closed',
  options: { closedType?: FeedbackType; text?: string; studentCode?: string; stream?: boolean },
): MessagePayload {
  const payload: MessagePayload = { mode };
  if (mode === 'closed') {
    payload.closed_type = options.closedType;
  } else {
    payload.text = options.text;
  }
  if (options.studentCode && options.studentCode.trim()) {
    payload.student_code = options.studentCode;
  }
  if (options.stream) {
    payload.stream = true;
  }
  return payload;
}

/** Parse one SSE frame body ("data: {...}") into a stream event. */
export function parseSseLine(line: string): StreamEvent | null {
  if (!line.startsWith('data: ')) return null;
  return JSON.parse(line.slice(6)) as StreamEvent;
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json();
  if (!response.ok) {
    throw new ApiError(body as ApiErrorBody);
  }
  return body as T;
}

export class TutorApi {
  constructor(private baseUrl: string = '') {}

  async listTasks(): Promise<TaskSummary[]> {
    return asJson(await fetch(`${this.baseUrl}/tasks`));
  }

  async createSession(taskId: string, studentToken: string | null): Promise<Session> {
    return asJson(
      await fetch(`${this.baseUrl}/sessions`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ task_id: taskId, student_token: studentToken }),
      }),
    );
  }

  async getSession(sessionId: string): Promise<Session> {
    return asJson(await fetch(`${this.baseUrl}/sessions/${sessionId}`));
  }

  async listSessions(studentToken: string): Promise<Session[]> {
    return asJson(await fetch(`${this.baseUrl}/students/${studentToken}/sessions`));
  }

  /**
   * Send a prompt and stream the response. `onChunk` fires per token batch;
   * the resolved value is the final stored turn.
   */
  async sendMessage(
    sessionId: string,
    payload: MessagePayload,
    onChunk?: (text: string) => void,
  ): Promise<import('./types.js').Turn> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/messages`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ ...payload, stream: true }),
    });
    if (!response.ok) {
      throw new ApiError((await response.json()) as ApiErrorBody);
    }
    const reader = response.body!.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    let finalTurn: import('./types.js').Turn | null = null;
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf('\n\n')) >= 0) {
        const frame = buffer.slice(0, split).trim();
        buffer = buffer.slice(split + 2);
        const event = parseSseLine(frame);
        if (!event) continue;
        if (event.type === 'chunk') {
          onChunk?.(event.text);
        } else if (event.type === 'done') {
          finalTurn = event.turn;
        } else if (event.type === 'error') {
          throw new ApiError(event);
        }
      }
    }
    if (!finalTurn) {
      throw new ApiError({ code: 'BackendFailure', message: 'stream ended without a turn' });
    }
    return finalTurn;
  }

  async rateTurn(turnId: string, thumb: 'up' | 'down', comment?: string): Promise<void> {
    await asJson(
      await fetch(`${this.baseUrl}/turns/${turnId}/rating`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ thumb, comment: comment ?? null }),
      }),
    );
  }

  async exportCorpus(): Promise<string> {
    const response = await fetch(`${this.baseUrl}/export`);
    return response.text();
  }
}
