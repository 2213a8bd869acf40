import { describe, expect, it } from 'vitest';

import { buildQueue, currentId, markStage, next, prev, remaining } from '../src/queue.js';
import type { TaskSummary } from '../src/types.js';

function summaries(stages: Record<string, string>): TaskSummary[] {
  return Object.entries(stages).map(([slap_id, stage]) => ({
    slap_id,
    subject_id: 's',
    cohort: 'adult',
    hand: 'right',
    stage: stage as TaskSummary['stage'],
    version: 0,
    n_boxes: 4,
  }));
}

describe('queue navigation', () => {
  it('advances forward', () => {
    let q = buildQueue(summaries({ a: 'rotation_review', b: 'box_review', c: 'done' }));
    expect(currentId(q)).toBe('a');
    q = next(q);
    expect(currentId(q)).toBe('b');
  });

  it('wraps to the first unfinished task at the end', () => {
    let q = buildQueue(summaries({ a: 'done', b: 'box_review', c: 'rotation_review' }));
    q = { ...q, position: 2 };
    q = next(q);
    expect(currentId(q)).toBe('b'); // a is done, b is the first open task
  });

  it('wraps to the start when everything is done', () => {
    let q = buildQueue(summaries({ a: 'done', b: 'done' }));
    q = { ...q, position: 1 };
    q = next(q);
    expect(currentId(q)).toBe('a');
  });

  it('prev wraps to the end', () => {
    const q = buildQueue(summaries({ a: 'done', b: 'done', c: 'done' }));
    expect(currentId(prev(q))).toBe('c');
  });

  it('tracks remaining work via stage marks', () => {
    let q = buildQueue(summaries({ a: 'rotation_review', b: 'box_review' }));
    expect(remaining(q)).toBe(2);
    q = markStage(q, 'a', 'done');
    expect(remaining(q)).toBe(1);
  });

  it('empty queue is inert', () => {
    const q = buildQueue([]);
    expect(currentId(q)).toBeNull();
    expect(currentId(next(q))).toBeNull();
  });
});
