// Review queue navigation: forward/backward over the task list, with
// wrap-around to the first unfinished task at the end.

import type { Stage, TaskSummary } from './types.js';

export interface QueueState {
  ids: string[];
  stages: Map<string, Stage>;
  position: number;
}

export function buildQueue(summaries: TaskSummary[]): QueueState {
  return {
    ids: summaries.map((s) => s.slap_id),
    stages: new Map(summaries.map((s) => [s.slap_id, s.stage])),
    position: 0,
  };
}

export function currentId(q: QueueState): string | null {
  return q.ids.length ? q.ids[q.position] : null;
}

export function markStage(q: QueueState, slapId: string, stage: Stage): QueueState {
  const stages = new Map(q.stages);
  stages.set(slapId, stage);
  return { ...q, stages };
}

function firstUnfinished(q: QueueState): number {
  const idx = q.ids.findIndex((id) => q.stages.get(id) !== 'done');
  return idx === -1 ? 0 : idx;
}

/** Advance; past the end, wrap to the first task that still needs work. */
export function next(q: QueueState): QueueState {
  if (!q.ids.length) return q;
  if (q.position + 1 >= q.ids.length) {
    return { ...q, position: firstUnfinished(q) };
  }
  return { ...q, position: q.position + 1 };
}

export function prev(q: QueueState): QueueState {
  if (!q.ids.length) return q;
  return { ...q, position: q.position === 0 ? q.ids.length - 1 : q.position - 1 };
}

export function remaining(q: QueueState): number {
  return q.ids.filter((id) => q.stages.get(id) !== 'done').length;
}
