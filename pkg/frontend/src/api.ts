import type {
  AgreementStats,
  LabelSubmission,
  NextTask,
  Progress,
  SubmitAck,
} from "./types.js";

/** Server rejected the request (4xx/5xx); carries the response detail. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function readDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return `${response.status} ${response.statusText}`;
  }
}

/** Typed client for the annotation service HTTP+JSON API. */
export class AnnoClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly token?: string,
  ) {}

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers["Content-Type"] = "application/json";
    if (this.token) headers["X-Annoserve-Token"] = this.token;
    return headers;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      headers: this.headers(false),
    });
    if (!response.ok) throw new ApiError(response.status, await readDetail(response));
    return (await response.json()) as T;
  }

  nextTask(annotator: string): Promise<NextTask> {
    return this.getJson<NextTask>(
      `/api/tasks/next?annotator=${encodeURIComponent(annotator)}`,
    );
  }

  progress(annotator: string): Promise<Progress & { schema_version: number }> {
    return this.getJson(`/api/progress?annotator=${encodeURIComponent(annotator)}`);
  }

  agreement(): Promise<AgreementStats> {
    return this.getJson<AgreementStats>("/api/stats/agreement");
  }

  async submitLabel(submission: LabelSubmission): Promise<SubmitAck> {
    const response = await fetch(this.baseUrl + "/api/labels", {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify(submission),
    });
    if (!response.ok) throw new ApiError(response.status, await readDetail(response));
    return (await response.json()) as SubmitAck;
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
  }
}
