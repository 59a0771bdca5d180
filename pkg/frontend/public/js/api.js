/** Server rejected the request (4xx/5xx); carries the response detail. */
export class ApiError extends Error {
    constructor(status, detail) {
        super(detail);
        this.status = status;
        this.name = "ApiError";
    }
}
async function readDetail(response) {
    try {
        const body = (await response.json());
        if (typeof body.detail === "string")
            return body.detail;
        return JSON.stringify(body);
    }
    catch {
        return `${response.status} ${response.statusText}`;
    }
}
/** Typed client for the annotation service HTTP+JSON API. */
export class AnnoClient {
    constructor(baseUrl = "", token) {
        this.baseUrl = baseUrl;
        this.token = token;
    }
    headers(json) {
        const headers = {};
        if (json)
            headers["Content-Type"] = "application/json";
        if (this.token)
            headers["X-Annoserve-Token"] = this.token;
        return headers;
    }
    async getJson(path) {
        const response = await fetch(this.baseUrl + path, {
            headers: this.headers(false),
        });
        if (!response.ok)
            throw new ApiError(response.status, await readDetail(response));
        return (await response.json());
    }
    nextTask(annotator) {
        return this.getJson(`/api/tasks/next?annotator=${encodeURIComponent(annotator)}`);
    }
    progress(annotator) {
        return this.getJson(`/api/progress?annotator=${encodeURIComponent(annotator)}`);
    }
    agreement() {
        return this.getJson("/api/stats/agreement");
    }
    async submitLabel(submission) {
        const response = await fetch(this.baseUrl + "/api/labels", {
            method: "POST",
            headers: this.headers(true),
            body: JSON.stringify(submission),
        });
        if (!response.ok)
            throw new ApiError(response.status, await readDetail(response));
        return (await response.json());
    }
    imageUrl(imageId) {
        return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}`;
    }
}
