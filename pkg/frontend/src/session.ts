/** Session state and the submit loop.
 *
 * State transitions are pure functions over a `Session` value; the
 * `Workbench` wrapper owns the mutable current session and enforces the
 * latest-wins concurrency rule: one request in flight, newer submissions
 * supersede it, and a superseded response is never rendered.
 */

import { ApiClient } from "./api.js";
import { BACKGROUND, classColor } from "./palette.js";
import type {
  HistoryEntry,
  RequestConfig,
  SegmentRequestBody,
  Session,
} from "./types.js";

export const DEFAULT_CONFIG: RequestConfig = {
  scales: [256, 128, 64],
  globalScale0: false,
  logitScale: 1.0,
  ablation: "full",
};

export function createSession(config: Partial<RequestConfig> = {}): Session {
  return {
    image: null,
    imageName: null,
    prompts: [],
    config: { ...DEFAULT_CONFIG, ...config, scales: [...(config.scales ?? DEFAULT_CONFIG.scales)] },
    lastResponse: null,
    pending: false,
    error: null,
    history: [],
  };
}

export function setImage(session: Session, image: Blob, name: string): Session {
  return { ...session, image, imageName: name, lastResponse: null, error: null };
}

export function addPrompt(session: Session, rawName: string): Session {
  const name = rawName.trim();
  if (!name) throw new Error("prompt must not be empty");
  if (name.toLowerCase() === BACKGROUND) {
    throw new Error("background is implicit and cannot be edited");
  }
  if (session.prompts.some((p) => p.name === name)) {
    throw new Error(`duplicate prompt ${JSON.stringify(name)}`);
  }
  return {
    ...session,
    prompts: [...session.prompts, { name, color: classColor(name) }],
  };
}

export function removePrompt(session: Session, name: string): Session {
  return { ...session, prompts: session.prompts.filter((p) => p.name !== name) };
}

export function setConfig(session: Session, patch: Partial<RequestConfig>): Session {
  const config = { ...session.config, ...patch };
  if (patch.scales) config.scales = [...patch.scales];
  return { ...session, config };
}

export function canSubmit(session: Session): boolean {
  return session.image !== null && session.prompts.length >= 1;
}

export function canExport(session: Session): boolean {
  return session.lastResponse !== null;
}

/** The exact JSON placed in the `request` form part. */
export function requestBody(session: Session): SegmentRequestBody {
  const { config } = session;
  return {
    prompts: session.prompts.map((p) => p.name),
    scales: [...config.scales],
    global_scale0: config.globalScale0,
    logit_scale: config.logitScale,
    ablation: config.ablation,
  };
}

function historyEntry(session: Session): HistoryEntry {
  return {
    prompts: session.prompts.map((p) => p.name),
    config: { ...session.config, scales: [...session.config.scales] },
  };
}

export class Workbench {
  session: Session;
  private seq = 0;

  constructor(private readonly client: ApiClient, session?: Session) {
    this.session = session ?? createSession();
  }

  /** POST the current prompts and config; resolve to the updated session. */
  async submitQuery(): Promise<Session> {
    if (!canSubmit(this.session)) {
      throw new Error("submit needs a loaded image and at least one prompt");
    }
    const ticket = ++this.seq;
    const submitted = this.session;
    this.session = { ...submitted, pending: true, error: null };
    try {
      const response = await this.client.segment(submitted.image!, requestBody(submitted));
      if (ticket !== this.seq) return this.session;  // superseded: latest wins
      this.session = {
        ...this.session,
        pending: false,
        lastResponse: response,
        error: null,
        history: [...this.session.history, historyEntry(submitted)],
      };
    } catch (err) {
      if (ticket !== this.seq) return this.session;
      // failure leaves everything but the banner as it was
      this.session = {
        ...submitted,
        pending: false,
        error: err instanceof Error ? err.message : String(err),
      };
    }
    return this.session;
  }

  update(next: Session): Session {
    this.session = next;
    return next;
  }
}
