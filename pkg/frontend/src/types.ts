/** Wire types of the tutoring service API. */

export type FeedbackType = 'KTC' | 'KC' | 'KM' | 'KH' | 'KP' | 'KR';

export interface TaskSummary {
  task_id: string;
  title: string;
  description: string;
  concept_tags: string[];
}

export interface Turn {
  turn_id: string;
  session_id: string;
  index: number;
  mode: 'open' | 'closed';
  closed_type: FeedbackType | null;
  prompt_text: string;
  response_text: string;
  rating: 'up' | 'down' | null;
  comment: string | null;
  response_error: boolean;
}

export interface Session {
  session_id: string;
  anonymous_student_id: string;
  task_id: string;
  started_at: string;
  turns: Turn[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  turn_id?: string;
}

export type StreamEvent =
  | { type: 'chunk'; text: string }
  | { type: 'done'; turn: Turn }
  | ({ type: 'error' } & ApiErrorBody);

export interface MessagePayload {
  mode: 'open' | 'closed';
  closed_type?: FeedbackType;
  text?: string;
  student_code?: string;
  stream?: boolean;
}
