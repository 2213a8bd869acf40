// Shapes of the annotation service JSON API.

export interface BoxData {
  left: number;
  top: number;
  right: number;
  bottom: number;
}

export type FingerLabel = 'index' | 'middle' | 'ring' | 'little' | 'thumb';

export type Stage = 'rotation_review' | 'box_review' | 'done';

export interface Proposal {
  box: BoxData;
  label: string;
  source: 'baseline' | 'model' | 'human';
}

export interface TaskSummary {
  slap_id: string;
  subject_id: string;
  cohort: string;
  hand: string;
  stage: Stage;
  version: number;
  n_boxes: number;
}

export interface Task {
  slap_id: string;
  subject_id: string;
  cohort: string;
  hand: string;
  stage: Stage;
  version: number;
  proposed_angle: number;
  verified_angle: number | null;
  capture_size: [number, number];
  image_url: string;
  proposals: Proposal[];
}

export interface BoxEditPayload {
  index: number;
  box: BoxData;
  label?: string;
}

export interface CorrectionPayload {
  base_version: number;
  annotator_id: string;
  edits: BoxEditPayload[];
}

export interface ApiError {
  code: 'not_found' | 'conflict' | 'validation';
  message: string;
}
