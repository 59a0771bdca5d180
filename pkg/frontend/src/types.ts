export type Category = "Male" | "Female" | "LowQuality" | "Others";

export const CATEGORIES: Category[] = ["Male", "Female", "LowQuality", "Others"];

export const LOWQ_REASONS = [
  "MultiplePeople",
  "NoPerson",
  "NoFace",
  "Blurred",
] as const;

export type LowQualityReason = (typeof LOWQ_REASONS)[number];

export interface Progress {
  annotator: string;
  done: number;
  total: number;
  queue_seed: number;
}

export interface NextTask {
  schema_version: number;
  done: boolean;
  image_id?: string;
  image_url?: string;
  progress: Progress;
}

export interface SubmitAck {
  schema_version: number;
  accepted: boolean;
  image_id: string;
  progress: Progress;
}

export interface AgreementStats {
  schema_version: number;
  kappa: number | null;
  annotators: [string, string] | null;
  n_common: number;
  disagreements: Record<string, number>;
  unresolved: string[];
}

export interface LabelSubmission {
  annotator: string;
  image_id: string;
  category: Category;
  reason: string | null;
}
