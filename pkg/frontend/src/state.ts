// Session state: what is selected and what has been pinned.

export const MAX_COMPARED_MODELS = 3;

export interface FrameRef {
  seq: string;
  frame: number;
}

export interface SourceSelection extends FrameRef {
  u: number;
  v: number;
}

export interface ProbeOutcome {
  model: string;
  pixel: { u: number; v: number };
  distance: number;
  heatmapId: string;
  heatmapMin: number;
  heatmapMax: number;
}

export interface PinnedProbe {
  source: SourceSelection;
  target: FrameRef;
  outcomes: ProbeOutcome[];
}

export interface SessionState {
  models: string[]; // selected, at most MAX_COMPARED_MODELS
  source: SourceSelection | null;
  target: FrameRef | null;
  overlayOpacity: number;
  overlayModel: string | null; // which model's heatmap is overlaid
  pinned: PinnedProbe[];
}

export function initialState(): SessionState {
  return {
    models: [],
    source: null,
    target: null,
    overlayOpacity: 0.55,
    overlayModel: null,
    pinned: [],
  };
}

export function toggleModel(state: SessionState, name: string): SessionState {
  const models = state.models.includes(name)
    ? state.models.filter((m) => m !== name)
    : [...state.models, name].slice(0, MAX_COMPARED_MODELS);
  const overlayModel = models.includes(state.overlayModel ?? "") ? state.overlayModel : models[0] ?? null;
  return { ...state, models, overlayModel };
}

export function pinProbe(state: SessionState, probe: PinnedProbe): SessionState {
  return { ...state, pinned: [...state.pinned, probe] };
}
