export interface RewardBreakdown {
  r_answer: number;
  r_format: number;
  total: number;
}

export interface ErrorBody {
  error: {
    status: number;
    message: string;
    detail?: unknown;
  };
}

/** Batch elements are either a breakdown or an in-place error object. */
export type BatchResult = RewardBreakdown | ErrorBody;

export function isErrorResult(r: BatchResult): r is ErrorBody {
  return typeof r === "object" && r !== null && "error" in r;
}

export interface HealthInfo {
  status: string;
  version: string;
  config_hash: string;
}

export type RewardMode = "relaxed" | "strict";

export interface ClientConfig {
  baseUrl: string;
  authToken?: string;
  /** per-request timeout in milliseconds */
  timeoutMs?: number;
  /** retry count for 5xx/429/network failures, exponential backoff */
  retries?: number;
  /** when set, the first call verifies /healthz reports this grading config */
  expectedConfigHash?: string;
}
