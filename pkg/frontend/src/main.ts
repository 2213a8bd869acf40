// Browser entry: canvas viewer with zoom/pan, rotation review, box
// editing, and keyboard-driven queue navigation.
//
//   n / p     next / previous task
//   enter     accept (confirm rotation, or save box edits)
//   escape    discard local edits
//   wheel     zoom at cursor; drag empty space to pan

import {
  ServiceError,
  getTask,
  listAllTasks,
  submitBoxes,
  submitRotation,
} from './api.js';
import { applyDrag, clampToImage, hitTest, type Handle } from './boxEditor.js';
import {
  buildCorrection,
  discardEdits,
  effectiveProposals,
  hasEdits,
  rebaseAfterConflict,
  startSession,
  touchBox,
  touchLabel,
  type EditSession,
} from './editState.js';
import { buildQueue, currentId, markStage, next, prev, remaining, type QueueState } from './queue.js';
import {
  fitTransform,
  imageToScreen,
  pan,
  screenToImage,
  zoomAt,
  type ViewTransform,
} from './transform.js';
import type { Task } from './types.js';

const FINGER_LABELS = ['index', 'middle', 'ring', 'little', 'thumb'];
const HANDLE_TOLERANCE_SCREEN = 6; // px on screen, divided by scale for image space

interface AppState {
  queue: QueueState;
  task: Task | null;
  session: EditSession | null;
  image: HTMLImageElement | null;
  view: ViewTransform;
  selected: number | null;
  drag: { handle: Handle; index: number; lastX: number; lastY: number } | null;
  panning: { lastX: number; lastY: number } | null;
  angleInput: number;
  status: string;
}

const state: AppState = {
  queue: { ids: [], stages: new Map(), position: 0 },
  task: null,
  session: null,
  image: null,
  view: { scale: 1, offsetX: 0, offsetY: 0 },
  selected: null,
  drag: null,
  panning: null,
  angleInput: 0,
  status: 'loading…',
};

const canvas = document.getElementById('viewer') as HTMLCanvasElement;
const ctx = canvas.getContext('2d')!;
const statusEl = document.getElementById('status')!;
const infoEl = document.getElementById('task-info')!;
const labelSelect = document.getElementById('label-select') as HTMLSelectElement;
const angleField = document.getElementById('angle-field') as HTMLInputElement;
const annotatorField = document.getElementById('annotator-field') as HTMLInputElement;

for (const label of FINGER_LABELS) {
  const opt = document.createElement('option');
  opt.value = label;
  opt.textContent = label;
  labelSelect.appendChild(opt);
}

function setStatus(text: string) {
  state.status = text;
  statusEl.textContent = text;
}

function annotator(): string {
  return annotatorField.value.trim() || 'anonymous';
}

async function loadCurrent() {
  const id = currentId(state.queue);
  if (!id) {
    setStatus('queue empty');
    return;
  }
  try {
    const task = await getTask(id);
    state.task = task;
    state.session = startSession(task);
    state.selected = null;
    state.angleInput = task.verified_angle ?? task.proposed_angle;
    angleField.value = state.angleInput.toFixed(2);
    state.queue = markStage(state.queue, id, task.stage);
    const img = new Image();
    img.onload = () => {
      state.image = img;
      state.view = fitTransform(img.width, img.height, canvas.width, canvas.height);
      draw();
    };
    img.src = task.image_url;
    setStatus(`${task.slap_id} [${task.stage}] v${task.version} — ${remaining(state.queue)} open`);
    infoEl.textContent = `${task.subject_id} ${task.cohort} ${task.hand}`;
  } catch (err) {
    setStatus(`load failed: ${(err as Error).message} — retrying in 3s`);
    setTimeout(loadCurrent, 3000);
  }
}

function draw() {
  ctx.fillStyle = '#202025';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!state.image || !state.task) return;
  const t = state.view;
  ctx.save();
  ctx.imageSmoothingEnabled = t.scale < 3;
  ctx.setTransform(t.scale, 0, 0, t.scale, t.offsetX, t.offsetY);
  ctx.drawImage(state.image, 0, 0);
  ctx.restore();

  if (state.task.stage !== 'rotation_review' && state.session) {
    const proposals = effectiveProposals(state.session, state.task);
    proposals.forEach((p, i) => {
      const tl = imageToScreen(t, { x: p.box.left, y: p.box.top });
      const br = imageToScreen(t, { x: p.box.right, y: p.box.bottom });
      ctx.lineWidth = i === state.selected ? 2.5 : 1.5;
      ctx.strokeStyle = state.session!.dirty.has(i)
        ? '#ffad33'
        : p.source === 'human'
          ? '#6fd66f'
          : '#4da3ff';
      ctx.strokeRect(tl.x, tl.y, br.x - tl.x, br.y - tl.y);
      ctx.fillStyle = ctx.strokeStyle;
      ctx.font = '12px sans-serif';
      ctx.fillText(`${i}:${p.label}`, tl.x + 2, tl.y - 3);
      if (i === state.selected) {
        for (const hx of [tl.x, (tl.x + br.x) / 2, br.x]) {
          for (const hy of [tl.y, (tl.y + br.y) / 2, br.y]) {
            ctx.fillRect(hx - 3, hy - 3, 6, 6);
          }
        }
      }
    });
  }
}

function pointerImagePoint(ev: MouseEvent) {
  const rect = canvas.getBoundingClientRect();
  return screenToImage(state.view, { x: ev.clientX - rect.left, y: ev.clientY - rect.top });
}

canvas.addEventListener('mousedown', (ev) => {
  if (!state.task || !state.session) return;
  if (state.task.stage !== 'box_review') {
    state.panning = { lastX: ev.clientX, lastY: ev.clientY };
    return;
  }
  const p = pointerImagePoint(ev);
  const tol = HANDLE_TOLERANCE_SCREEN / state.view.scale;
  const proposals = effectiveProposals(state.session, state.task);
  for (let i = proposals.length - 1; i >= 0; i--) {
    const handle = hitTest(proposals[i].box, p, tol);
    if (handle) {
      state.selected = i;
      state.drag = { handle, index: i, lastX: ev.clientX, lastY: ev.clientY };
      labelSelect.value = proposals[i].label;
      draw();
      return;
    }
  }
  state.selected = null;
  state.panning = { lastX: ev.clientX, lastY: ev.clientY };
  draw();
});

canvas.addEventListener('mousemove', (ev) => {
  if (state.drag && state.task && state.session && state.image) {
    const dx = (ev.clientX - state.drag.lastX) / state.view.scale;
    const dy = (ev.clientY - state.drag.lastY) / state.view.scale;
    state.drag.lastX = ev.clientX;
    state.drag.lastY = ev.clientY;
    const proposals = effectiveProposals(state.session, state.task);
    const moved = applyDrag(proposals[state.drag.index].box, state.drag.handle, dx, dy);
    const clamped = clampToImage(moved, state.image.width, state.image.height);
    state.session = touchBox(state.session, state.drag.index, clamped);
    const br = clamped;
    setStatus(
      `box ${state.drag.index}: (${br.left.toFixed(1)}, ${br.top.toFixed(1)}) – ` +
        `(${br.right.toFixed(1)}, ${br.bottom.toFixed(1)})`,
    );
    draw();
  } else if (state.panning) {
    state.view = pan(state.view, ev.clientX - state.panning.lastX, ev.clientY - state.panning.lastY);
    state.panning = { lastX: ev.clientX, lastY: ev.clientY };
    draw();
  }
});

window.addEventListener('mouseup', () => {
  state.drag = null;
  state.panning = null;
});

canvas.addEventListener('wheel', (ev) => {
  ev.preventDefault();
  const rect = canvas.getBoundingClientRect();
  const factor = ev.deltaY < 0 ? 1.15 : 1 / 1.15;
  state.view = zoomAt(state.view, { x: ev.clientX - rect.left, y: ev.clientY - rect.top }, factor);
  draw();
});

labelSelect.addEventListener('change', () => {
  if (state.task && state.session && state.selected !== null) {
    const proposals = effectiveProposals(state.session, state.task);
    state.session = touchLabel(
      state.session,
      state.selected,
      labelSelect.value,
      proposals[state.selected].box,
    );
    draw();
  }
});

async function accept() {
  if (!state.task || !state.session) return;
  const id = state.task.slap_id;
  try {
    if (state.task.stage === 'rotation_review') {
      const angle = parseFloat(angleField.value);
      if (!Number.isFinite(angle)) {
        setStatus('angle must be a number');
        return;
      }
      await submitRotation(id, angle, annotator());
      await loadCurrent(); // same task, now in box_review
    } else if (state.task.stage === 'box_review') {
      await submitBoxes(id, buildCorrection(state.session, annotator()));
      state.queue = markStage(state.queue, id, 'done');
      state.queue = next(state.queue);
      await loadCurrent();
    } else {
      state.queue = next(state.queue);
      await loadCurrent();
    }
  } catch (err) {
    if (err instanceof ServiceError && err.code === 'conflict') {
      // refetch and keep the local edits staged for confirmation
      const fresh = await getTask(id);
      state.task = fresh;
      state.session = rebaseAfterConflict(state.session, fresh);
      setStatus(`version conflict: now at v${fresh.version}; review edits and accept again`);
      draw();
    } else {
      setStatus(`submit failed: ${(err as Error).message} — edits kept locally`);
    }
  }
}

window.addEventListener('keydown', (ev) => {
  if (ev.target === angleField || ev.target === annotatorField) return;
  if (ev.key === 'n') {
    state.queue = next(state.queue);
    void loadCurrent();
  } else if (ev.key === 'p') {
    state.queue = prev(state.queue);
    void loadCurrent();
  } else if (ev.key === 'Enter') {
    void accept();
  } else if (ev.key === 'Escape' && state.session && hasEdits(state.session)) {
    state.session = discardEdits(state.session);
    setStatus('local edits discarded');
    draw();
  }
});

document.getElementById('accept-btn')!.addEventListener('click', () => void accept());

async function boot() {
  try {
    const summaries = await listAllTasks();
    state.queue = buildQueue(summaries);
    await loadCurrent();
  } catch (err) {
    setStatus(`service unreachable: ${(err as Error).message} — retrying in 3s`);
    setTimeout(boot, 3000);
  }
}

void boot();
