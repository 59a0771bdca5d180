import { AnnoClient, ApiError } from "./api.js";
import { bindKeys } from "./keyboard.js";
import {
  CATEGORIES,
  LOWQ_REASONS,
  type AgreementStats,
  type Category,
  type NextTask,
} from "./types.js";

const RETRY_DELAY_MS = 1500;

interface HistoryEntry {
  image_id: string;
  category: Category;
}

/**
 * Keyboard-first labeling client.
 *
 * Male/Female submit immediately on choice; LowQuality opens an optional
 * reason picker and Others demands a free-text reason before submit is
 * possible.  The client holds no authoritative state: a refresh resumes at
 * whatever the server says the cursor is.
 */
export class AnnotateApp {
  private task: NextTask | null = null;
  private selected: Category | null = null;
  private lowqReason = "";
  private othersReason = "";
  private error: string | null = null;
  private busy = false;
  private zoomed = false;
  private history: HistoryEntry[] = [];
  private revisitIndex: number | null = null;
  private agreement: AgreementStats | null = null;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private unbind: () => void = () => {};

  constructor(
    private readonly root: HTMLElement,
    private readonly client: AnnoClient,
    private readonly annotator: string,
  ) {}

  async start(): Promise<void> {
    this.unbind = bindKeys({
      m: () => this.choose("Male"),
      f: () => this.choose("Female"),
      l: () => this.choose("LowQuality"),
      o: () => this.choose("Others"),
      enter: () => void this.submit(),
      escape: () => this.clearSelection(),
      z: () => this.toggleZoom(),
      arrowleft: () => this.revisitPrev(),
      arrowright: () => this.revisitNext(),
    });
    await this.loadNext();
  }

  destroy(): void {
    this.unbind();
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
  }

  // -- state transitions ---------------------------------------------------

  private async loadNext(): Promise<void> {
    try {
      this.task = await this.client.nextTask(this.annotator);
      this.error = null;
      if (this.task.done) {
        this.agreement = await this.client.agreement().catch(() => null);
      }
    } catch (err) {
      this.task = null;
      this.error = describeError(err);
    }
    this.selected = null;
    this.lowqReason = "";
    this.othersReason = "";
    this.render();
  }

  private currentImageId(): string | null {
    if (this.revisitIndex !== null) {
      return this.history[this.revisitIndex]?.image_id ?? null;
    }
    return this.task && !this.task.done ? (this.task.image_id ?? null) : null;
  }

  choose(category: Category): void {
    if (this.busy || this.currentImageId() === null) return;
    this.selected = category;
    this.error = null;
    this.render();
    if (category === "Male" || category === "Female") {
      void this.submit();
    } else if (category === "Others") {
      this.focusReason();
    }
  }

  private clearSelection(): void {
    if (this.revisitIndex !== null) {
      this.revisitIndex = null;
    } else {
      this.selected = null;
      this.lowqReason = "";
      this.othersReason = "";
    }
    this.render();
  }

  private toggleZoom(): void {
    this.zoomed = !this.zoomed;
    this.render();
  }

  canSubmit(): boolean {
    if (this.busy || this.selected === null || this.currentImageId() === null) {
      return false;
    }
    if (this.selected === "Others") return this.othersReason.trim().length > 0;
    return true;
  }

  private reasonFor(category: Category): string | null {
    if (category === "LowQuality") return this.lowqReason || null;
    if (category === "Others") return this.othersReason.trim();
    return null;
  }

  async submit(): Promise<void> {
    if (!this.canSubmit()) return;
    const image_id = this.currentImageId();
    const category = this.selected;
    if (image_id === null || category === null) return;
    const submission = {
      annotator: this.annotator,
      image_id,
      category,
      reason: this.reasonFor(category),
    };
    this.busy = true;
    this.render();
    try {
      await this.client.submitLabel(submission);
      this.recordHistory(image_id, category);
      this.busy = false;
      if (this.revisitIndex !== null) {
        // Revision of an earlier image: the server cursor is unchanged.
        this.revisitIndex = null;
        this.selected = null;
        this.render();
      } else {
        await this.loadNext();
      }
    } catch (err) {
      this.busy = false;
      if (err instanceof ApiError) {
        // Server said no; show why and stay on this image.
        this.error = err.message;
        this.render();
      } else {
        // Network trouble: keep the choice and retry without advancing.
        this.error = "connection lost; retrying…";
        this.render();
        this.retryTimer = setTimeout(() => {
          this.retryTimer = null;
          void this.submit();
        }, RETRY_DELAY_MS);
      }
    }
  }

  private recordHistory(image_id: string, category: Category): void {
    const existing = this.history.findIndex((e) => e.image_id === image_id);
    if (existing >= 0) {
      this.history[existing] = { image_id, category };
    } else {
      this.history.push({ image_id, category });
    }
  }

  private revisitPrev(): void {
    if (this.history.length === 0 || this.busy) return;
    if (this.revisitIndex === null) {
      this.revisitIndex = this.history.length - 1;
    } else if (this.revisitIndex > 0) {
      this.revisitIndex -= 1;
    }
    this.selected = null;
    this.render();
  }

  private revisitNext(): void {
    if (this.revisitIndex === null) return;
    if (this.revisitIndex < this.history.length - 1) {
      this.revisitIndex += 1;
    } else {
      this.revisitIndex = null;
    }
    this.selected = null;
    this.render();
  }

  // -- rendering -----------------------------------------------------------

  private render(): void {
    if (this.task === null && this.error !== null) {
      this.root.innerHTML = `
        <div class="error" id="error">${escapeHtml(this.error)}</div>
        <button id="reload">reload</button>`;
      this.root.querySelector("#reload")!.addEventListener("click", () => {
        void this.loadNext();
      });
      return;
    }
    if (this.task?.done && this.revisitIndex === null) {
      this.renderDone();
      return;
    }
    this.renderLabeling();
  }

  private renderDone(): void {
    const progress = this.task?.progress;
    const agreement = this.agreement;
    const kappaText =
      agreement && agreement.kappa !== null
        ? `κ = ${agreement.kappa.toFixed(3)} with ${agreement.annotators?.join(" & ")} over ${agreement.n_common} images`
        : "waiting for a second annotator";
    this.root.innerHTML = `
      <div id="done-screen">
        <h2>All done</h2>
        <p id="done-progress">${progress?.done ?? 0}/${progress?.total ?? 0} images labeled</p>
        <p id="kappa-panel">${escapeHtml(kappaText)}</p>
        <p id="unresolved-count">${agreement?.unresolved.length ?? 0} unresolved disagreements</p>
        <button id="revisit-from-done">review earlier labels (←)</button>
      </div>`;
    this.root
      .querySelector("#revisit-from-done")!
      .addEventListener("click", () => this.revisitPrev());
  }

  private renderLabeling(): void {
    const revisiting = this.revisitIndex !== null;
    const imageId = this.currentImageId();
    if (imageId === null) {
      this.root.innerHTML = `<div id="error" class="error">nothing to label</div>`;
      return;
    }
    const progress = this.task?.progress;
    const fraction = progress && progress.total > 0 ? progress.done / progress.total : 0;
    const previous = revisiting ? this.history[this.revisitIndex!] : undefined;

    this.root.innerHTML = `
      ${revisiting ? `<div id="revisit-banner">reviewing ${escapeHtml(imageId)} (previously ${previous?.category ?? "?"}) — Esc to return</div>` : ""}
      <div id="progress">
        <div id="progress-bar" style="width:${(fraction * 100).toFixed(1)}%"></div>
        <span id="progress-text">${progress?.done ?? 0}/${progress?.total ?? 0}</span>
      </div>
      <figure id="stage">
        <img id="image" class="${this.zoomed ? "zoomed" : ""}" alt="image to label"
             src="${this.client.imageUrl(imageId)}" data-image-id="${escapeHtml(imageId)}">
        <button id="zoom">${this.zoomed ? "native size (z)" : "zoom (z)"}</button>
      </figure>
      <div id="categories">
        ${CATEGORIES.map((c) => categoryButton(c, this.selected)).join("")}
      </div>
      <div id="reason-panel">${this.reasonPanelHtml()}</div>
      <div id="error" class="error" ${this.error ? "" : "hidden"}>${escapeHtml(this.error ?? "")}</div>
      <button id="submit" ${this.canSubmit() ? "" : "disabled"}>submit (Enter)</button>
      <div id="hints">keys: M/F submit directly · L low-quality · O others · ← review</div>`;

    for (const category of CATEGORIES) {
      this.root
        .querySelector(`#btn-${category.toLowerCase()}`)!
        .addEventListener("click", () => this.choose(category));
    }
    this.root.querySelector("#zoom")!.addEventListener("click", () => this.toggleZoom());
    this.root.querySelector("#submit")!.addEventListener("click", () => void this.submit());

    const lowqSelect = this.root.querySelector<HTMLSelectElement>("#lowq-reason");
    lowqSelect?.addEventListener("change", () => {
      this.lowqReason = lowqSelect.value;
    });
    const othersInput = this.root.querySelector<HTMLInputElement>("#others-reason");
    othersInput?.addEventListener("input", () => {
      this.othersReason = othersInput.value;
      const submit = this.root.querySelector<HTMLButtonElement>("#submit");
      if (submit) submit.disabled = !this.canSubmit();
    });
  }

  private reasonPanelHtml(): string {
    if (this.selected === "LowQuality") {
      const options = LOWQ_REASONS.map(
        (r) =>
          `<option value="${r}" ${this.lowqReason === r ? "selected" : ""}>${r}</option>`,
      ).join("");
      return `<label>why is it low quality? (optional)
        <select id="lowq-reason"><option value="">unspecified</option>${options}</select>
      </label>`;
    }
    if (this.selected === "Others") {
      return `<label>reason (required)
        <input id="others-reason" type="text" value="${escapeHtml(this.othersReason)}"
               placeholder="e.g. cannot apply the guidelines here">
      </label>`;
    }
    return "";
  }

  private focusReason(): void {
    this.root.querySelector<HTMLInputElement>("#others-reason")?.focus();
  }
}

function categoryButton(category: Category, selected: Category | null): string {
  const key = category === "LowQuality" ? "L" : category[0];
  return `<button id="btn-${category.toLowerCase()}"
    class="category ${selected === category ? "selected" : ""}"
    data-category="${category}">${category} (${key})</button>`;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  if (err instanceof Error) return err.message;
  return String(err);
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
