import { HttpError, httpRequest, RequestOptions } from "./http.js";
import {
  BatchResult,
  ClientConfig,
  HealthInfo,
  RewardBreakdown,
  RewardMode,
} from "./types.js";

export class NotFoundError extends Error {
  constructor(public readonly recordId: string) {
    super(`unknown record_id ${recordId}`);
    this.name = "NotFoundError";
  }
}

export class ConfigMismatchError extends Error {
  constructor(
    public readonly expected: string,
    public readonly actual: string,
  ) {
    super(`service grading config ${actual} does not match expected ${expected}`);
    this.name = "ConfigMismatchError";
  }
}

export class ValidationError extends Error {
  constructor(public readonly violations: unknown) {
    super("some records fail validation");
    this.name = "ValidationError";
  }
}

/**
 * Thin client for the reward service.  It never grades anything itself:
 * every number comes back verbatim from the server, so training loops see
 * exactly the rewards the reference grader produces.
 */
export class RewardClient {
  private readonly baseUrl: string;
  private readonly opts: RequestOptions;
  private readonly headers: Record<string, string>;
  private configChecked = false;

  constructor(private readonly config: ClientConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, "");
    this.opts = { retries: config.retries ?? 2, timeoutMs: config.timeoutMs ?? 30_000 };
    this.headers = { "Content-Type": "application/json" };
    if (config.authToken) this.headers["Authorization"] = `Bearer ${config.authToken}`;
  }

  async health(): Promise<HealthInfo> {
    return httpRequest<HealthInfo>(`${this.baseUrl}/healthz`, { method: "GET" }, this.opts);
  }

  /** Throws ConfigMismatchError when the server grades with different rules. */
  private async ensureConfig(): Promise<void> {
    if (this.configChecked || !this.config.expectedConfigHash) return;
    const info = await this.health();
    if (info.config_hash !== this.config.expectedConfigHash) {
      throw new ConfigMismatchError(this.config.expectedConfigHash, info.config_hash);
    }
    this.configChecked = true;
  }

  /** Bulk-register corruption records (JSON objects); ids align 1:1 with input order. */
  async registerRecords(records: unknown[]): Promise<string[]> {
    if (records.length === 0) return [];
    await this.ensureConfig();
    const body = records.map((r) => JSON.stringify(r)).join("\n");
    try {
      const out = await httpRequest<{ ids: string[] }>(
        `${this.baseUrl}/v1/records`,
        { method: "POST", headers: this.headers, body },
        this.opts,
      );
      return out.ids;
    } catch (err) {
      if (err instanceof HttpError && err.status === 422) {
        throw new ValidationError((err.body as { error?: { detail?: unknown } })?.error?.detail);
      }
      throw err;
    }
  }

  /** Score one response against a registered record. */
  async reward(
    recordId: string,
    responseText: string,
    mode: RewardMode = "relaxed",
  ): Promise<RewardBreakdown> {
    await this.ensureConfig();
    try {
      return await httpRequest<RewardBreakdown>(
        `${this.baseUrl}/v1/reward`,
        {
          method: "POST",
          headers: this.headers,
          body: JSON.stringify({ record_id: recordId, response_text: responseText, mode }),
        },
        this.opts,
      );
    } catch (err) {
      if (err instanceof HttpError && err.status === 404) throw new NotFoundError(recordId);
      throw err;
    }
  }

  /**
   * Score a whole group in one call; the result is order-preserving and
   * element k equals the single-call result for pair k.  Per-element
   * failures come back as in-place error objects.
   */
  async rewardBatch(
    pairs: Array<[recordId: string, responseText: string]>,
    mode: RewardMode = "relaxed",
  ): Promise<BatchResult[]> {
    if (pairs.length === 0) return [];
    await this.ensureConfig();
    const body = pairs.map(([record_id, response_text]) => ({ record_id, response_text, mode }));
    return httpRequest<BatchResult[]>(
      `${this.baseUrl}/v1/reward/batch`,
      { method: "POST", headers: this.headers, body: JSON.stringify(body) },
      this.opts,
    );
  }
}
