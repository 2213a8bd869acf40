// Local edit buffer for the box-review stage.
//
// Only boxes the annotator actually touched enter the correction; the
// rest of the proposals are never re-sent. On a stale-version conflict
// the session is rebased onto the refetched task, keeping the local
// edits for the annotator to confirm.

import type { BoxData, CorrectionPayload, Proposal, Task } from './types.js';

export interface DirtyEntry {
  box: BoxData;
  label?: string;
}

export interface EditSession {
  slapId: string;
  baseVersion: number;
  dirty: Map<number, DirtyEntry>;
}

export function startSession(task: Task): EditSession {
  return { slapId: task.slap_id, baseVersion: task.version, dirty: new Map() };
}

export function touchBox(session: EditSession, index: number, box: BoxData,
                         label?: string): EditSession {
  const prev = session.dirty.get(index);
  const dirty = new Map(session.dirty);
  dirty.set(index, { box, label: label ?? prev?.label });
  return { ...session, dirty };
}

export function touchLabel(session: EditSession, index: number, label: string,
                           currentBox: BoxData): EditSession {
  const prev = session.dirty.get(index);
  const dirty = new Map(session.dirty);
  dirty.set(index, { box: prev?.box ?? currentBox, label });
  return { ...session, dirty };
}

export function discardEdits(session: EditSession): EditSession {
  return { ...session, dirty: new Map() };
}

export function hasEdits(session: EditSession): boolean {
  return session.dirty.size > 0;
}

/** The sparse correction: exactly one entry per touched box. */
export function buildCorrection(session: EditSession, annotatorId: string): CorrectionPayload {
  const edits = [...session.dirty.entries()]
    .sort(([a], [b]) => a - b)
    .map(([index, entry]) => ({
      index,
      box: entry.box,
      ...(entry.label !== undefined ? { label: entry.label } : {}),
    }));
  return { base_version: session.baseVersion, annotator_id: annotatorId, edits };
}

/**
 * After a 409 the caller refetches the task and rebases: the session
 * adopts the fresh version while the dirty buffer survives untouched so
 * the annotator can review their edits against the new proposals.
 */
export function rebaseAfterConflict(session: EditSession, freshTask: Task): EditSession {
  if (freshTask.slap_id !== session.slapId) {
    throw new Error(`rebase across tasks: ${session.slapId} vs ${freshTask.slap_id}`);
  }
  return {
    slapId: session.slapId,
    baseVersion: freshTask.version,
    dirty: new Map(session.dirty),
  };
}

/** Proposals with local edits overlaid, for rendering. */
export function effectiveProposals(session: EditSession, task: Task): Proposal[] {
  return task.proposals.map((p, i) => {
    const entry = session.dirty.get(i);
    if (!entry) return p;
    return { box: entry.box, label: entry.label ?? p.label, source: 'human' };
  });
}
