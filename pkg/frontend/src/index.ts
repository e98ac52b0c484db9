export { RewardClient, NotFoundError, ConfigMismatchError, ValidationError } from "./client.js";
export { HttpError, httpRequest, backoffMs, isRetryableStatus } from "./http.js";
export type {
  BatchResult,
  ClientConfig,
  ErrorBody,
  HealthInfo,
  RewardBreakdown,
  RewardMode,
} from "./types.js";
export { isErrorResult } from "./types.js";
