/** Wire format of the segmentation API plus the client-side session shape. */

export interface RleBinaryMask {
  size: [number, number];
  /** Alternating zero-run and one-run lengths; only the first may be 0. */
  counts: number[];
}

export interface RleLabelMap {
  size: [number, number];
  /** [value, length] pairs covering the row-major map exactly. */
  runs: [number, number][];
}

export interface PerClassMask {
  name: string;
  mask_rle: RleBinaryMask;
  pixel_fraction: number;
}

export interface SegmentResponse {
  classes: string[];
  labels_rle: RleLabelMap;
  per_class: PerClassMask[];
  overlay_png_b64: string;
  config_fingerprint: string;
  meta: Record<string, unknown>;
  probabilities_cdiy_b64?: string;
}

export type Ablation = "full" | "no_multiscale" | "no_objectness";

/** Inference knobs the workbench can vary per request. */
export interface RequestConfig {
  scales: number[];
  globalScale0: boolean;
  logitScale: number;
  ablation: Ablation;
}

/** JSON body of the `request` form part of POST /api/segment. */
export interface SegmentRequestBody {
  prompts: string[];
  scales?: number[];
  global_scale0?: boolean;
  logit_scale?: number;
  ablation?: Ablation;
}

export interface Prompt {
  name: string;
  color: [number, number, number];
}

export interface HistoryEntry {
  prompts: string[];
  config: RequestConfig;
}

export interface Session {
  image: Blob | null;
  imageName: string | null;
  prompts: Prompt[];
  config: RequestConfig;
  lastResponse: SegmentResponse | null;
  pending: boolean;
  error: string | null;
  history: HistoryEntry[];
}

export interface HealthInfo {
  status: string;
  embedding_dim: number;
  providers: { image: string; saliency: string };
}
