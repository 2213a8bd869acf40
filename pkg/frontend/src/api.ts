// Thin fetch client over the annotation service. All writes surface the
// machine-readable error code so the UI can branch on conflicts.

import type { ApiError, CorrectionPayload, Task, TaskSummary } from './types.js';

export class ServiceError extends Error {
  constructor(public code: ApiError['code'], message: string, public status: number) {
    super(message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(path, {
    headers: { 'content-type': 'application/json' },
    ...init,
  });
  if (!response.ok) {
    let code: ApiError['code'] = 'validation';
    let message = `${response.status}`;
    try {
      const body = (await response.json()) as ApiError;
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(code, message, response.status);
  }
  return (await response.json()) as T;
}

export async function listAllTasks(stage?: string): Promise<TaskSummary[]> {
  const out: TaskSummary[] = [];
  let cursor: string | null = null;
  do {
    const params = new URLSearchParams();
    if (stage) params.set('stage', stage);
    if (cursor) params.set('cursor', cursor);
    params.set('limit', '200');
    const page = await request<{ tasks: TaskSummary[]; next_cursor: string | null }>(
      `/tasks?${params}`,
    );
    out.push(...page.tasks);
    cursor = page.next_cursor;
  } while (cursor !== null);
  return out;
}

export function getTask(slapId: string): Promise<Task> {
  return request<Task>(`/tasks/${encodeURIComponent(slapId)}`);
}

export function submitRotation(slapId: string, angle: number, annotatorId: string) {
  return request<{ version: number; stage: string }>(
    `/tasks/${encodeURIComponent(slapId)}/rotation`,
    { method: 'POST', body: JSON.stringify({ angle, annotator_id: annotatorId }) },
  );
}

export function submitBoxes(slapId: string, correction: CorrectionPayload) {
  return request<{ version: number; stage: string }>(
    `/tasks/${encodeURIComponent(slapId)}/boxes`,
    { method: 'POST', body: JSON.stringify(correction) },
  );
}
