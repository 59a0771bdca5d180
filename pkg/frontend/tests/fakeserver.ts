import type { Category } from "../src/types.js";

interface StoredLabel {
  annotator: string;
  image_id: string;
  category: Category;
  reason: string | null;
}

/**
 * In-memory stand-in for the annotation service, installed as a fetch stub.
 * Mirrors the server's queue/cursor/validation semantics closely enough for
 * UI behavior tests.
 */
export class FakeService {
  labels: StoredLabel[] = [];
  failNextSubmits = 0; // simulate network loss on POST /api/labels
  rejectNextSubmitDetail: string | null = null; // simulate a 400 once
  kappa: number | null = null;

  constructor(readonly queue: string[]) {}

  private latest(annotator: string): Map<string, StoredLabel> {
    const current = new Map<string, StoredLabel>();
    for (const label of this.labels) {
      if (label.annotator === annotator) current.set(label.image_id, label);
    }
    return current;
  }

  private progress(annotator: string) {
    return {
      annotator,
      done: this.latest(annotator).size,
      total: this.queue.length,
      queue_seed: 0,
    };
  }

  private nextTask(annotator: string) {
    const labeled = this.latest(annotator);
    const image = this.queue.find((i) => !labeled.has(i));
    if (image === undefined) {
      return { schema_version: 1, done: true, progress: this.progress(annotator) };
    }
    return {
      schema_version: 1,
      done: false,
      image_id: image,
      image_url: `/api/images/${image}`,
      progress: this.progress(annotator),
    };
  }

  private submit(body: StoredLabel): { status: number; payload: unknown } {
    if (this.rejectNextSubmitDetail !== null) {
      const detail = this.rejectNextSubmitDetail;
      this.rejectNextSubmitDetail = null;
      return { status: 400, payload: { detail } };
    }
    if (!this.queue.includes(body.image_id)) {
      return { status: 400, payload: { detail: `image ${body.image_id} not in queue` } };
    }
    const valid: Category[] = ["Male", "Female", "LowQuality", "Others"];
    if (!valid.includes(body.category)) {
      return { status: 400, payload: { detail: `unknown label category: ${body.category}` } };
    }
    if (body.category === "Others" && !(body.reason ?? "").trim()) {
      return { status: 400, payload: { detail: "Others labels require a free-text reason" } };
    }
    this.labels.push(body);
    return {
      status: 200,
      payload: {
        schema_version: 1,
        accepted: true,
        image_id: body.image_id,
        progress: this.progress(body.annotator),
      },
    };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), "http://fake");
    const respond = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (url.pathname === "/api/tasks/next") {
      return respond(this.nextTask(url.searchParams.get("annotator") ?? ""));
    }
    if (url.pathname === "/api/labels" && init?.method === "POST") {
      if (this.failNextSubmits > 0) {
        this.failNextSubmits -= 1;
        throw new TypeError("fetch failed");
      }
      const body = JSON.parse(init.body as string) as StoredLabel;
      const { status, payload } = this.submit(body);
      return respond(payload, status);
    }
    if (url.pathname === "/api/stats/agreement") {
      return respond({
        schema_version: 1,
        kappa: this.kappa,
        annotators: this.kappa === null ? null : ["ann1", "ann2"],
        n_common: this.kappa === null ? 0 : this.queue.length,
        disagreements: {},
        unresolved: [],
      });
    }
    if (url.pathname === "/api/progress") {
      return respond({
        schema_version: 1,
        ...this.progress(url.searchParams.get("annotator") ?? ""),
      });
    }
    return respond({ detail: `no route for ${url.pathname}` }, 404);
  };
}
