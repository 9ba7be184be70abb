import type {
  AnomaliesResponse,
  GridPayload,
  KappaResponse,
  PatternDetail,
  PatternItem,
  RunSummary,
  Verdict,
  VerdictResult,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client over the service; the fetch implementation is injected
 * so tests can fake the network. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  listRuns(): Promise<RunSummary[]> {
    return this.get("/runs");
  }

  pendingPatterns(runId: string): Promise<PatternItem[]> {
    return this.get(`/runs/${runId}/patterns?status=pending`);
  }

  allPatterns(runId: string): Promise<PatternItem[]> {
    return this.get(`/runs/${runId}/patterns`);
  }

  patternDetail(patternId: string, runId: string): Promise<PatternDetail> {
    return this.get(`/patterns/${patternId}?run_id=${encodeURIComponent(runId)}`);
  }

  kappaReport(runId: string): Promise<KappaResponse> {
    return this.get(`/runs/${runId}/reports/kappa`);
  }

  anomaliesReport(runId: string): Promise<AnomaliesResponse> {
    return this.get(`/runs/${runId}/reports/anomalies`);
  }

  difficultyReport(runId: string): Promise<GridPayload> {
    return this.get(`/runs/${runId}/reports/difficulty`);
  }

  /** POST a verdict. The body is stable for a given (pattern, verdict, note),
   * which the server treats idempotently, so retries are safe. */
  async postVerdict(
    patternId: string,
    runId: string,
    verdict: Verdict,
    note?: string,
  ): Promise<VerdictResult> {
    const body: Record<string, unknown> = { verdict, rater: "expert", run_id: runId };
    if (note !== undefined) {
      body.note = note;
    }
    const resp = await this.fetchImpl(`${this.baseUrl}/patterns/${patternId}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw new Error(`POST verdict failed: ${resp.status}`);
    }
    return (await resp.json()) as VerdictResult;
  }
}
