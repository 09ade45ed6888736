import type { ApiClient, Prediction, SessionBody } from "./types.js";

export type Flag = "correct" | "incorrect" | null;

export interface Chip {
  label: string;
  kind: "taken" | "whatif";
  flag: Flag;
}

/** Immutable snapshot of everything the page renders. */
export interface ViewModel {
  sessionId: string | null;
  cursor: number;
  length: number;
  eof: boolean;
  chips: Chip[];
  predictions: Prediction[];
  banner: string | null;
  busy: boolean;
}

/**
 * Session state machine for the explorer.
 *
 * The store never computes probabilities itself: predictions, cursor and
 * eof all come verbatim from API responses. Step/what-if requests are
 * queued so at most one mutation per session is in flight.
 */
export class ExplorerStore {
  private chain: Promise<void> = Promise.resolve();
  private inFlight = 0;

  private sessionId: string | null = null;
  private cursor = 0;
  private length = 0;
  private eof = false;
  private chips: Chip[] = [];
  private predictions: Prediction[] = [];
  private banner: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: () => void = () => {},
  ) {}

  get pendingRequests(): number {
    return this.inFlight;
  }

  view(): ViewModel {
    return {
      sessionId: this.sessionId,
      cursor: this.cursor,
      length: this.length,
      eof: this.eof,
      chips: this.chips.map((c) => ({ ...c })),
      predictions: this.predictions.map((p) => ({ ...p })),
      banner: this.banner,
      busy: this.inFlight > 0,
    };
  }

  /** Serializes mutations; at most one request per session in flight. */
  private enqueue<T>(work: () => Promise<T>): Promise<T> {
    const run = this.chain.then(async () => {
      this.inFlight += 1;
      try {
        return await work();
      } finally {
        this.inFlight -= 1;
        this.onChange();
      }
    });
    this.chain = run.then(
      () => undefined,
      () => undefined,
    );
    return run;
  }

  private applySession(body: SessionBody): void {
    this.cursor = body.cursor;
    this.length = body.length;
    this.eof = body.eof;
    if (body.predictions) {
      this.predictions = body.predictions;
    }
  }

  load(source: { actions?: string; log?: string; session_index?: number }): Promise<void> {
    return this.enqueue(async () => {
      const session = await this.api.createSession(source);
      this.sessionId = session.id;
      this.chips = [];
      this.banner = null;
      this.applySession(session);
      const initial = await this.api.predict(session.id, 5);
      this.predictions = initial.predictions;
    });
  }

  private requireSession(): string {
    if (this.sessionId === null) {
      throw new Error("no session loaded");
    }
    return this.sessionId;
  }

  step(): Promise<void> {
    return this.enqueue(async () => {
      const body = await this.api.step(this.requireSession());
      if (body.eof && !body.taken) {
        this.eof = true;
        this.banner = "End of session";
        return;
      }
      const taken = body.taken!;
      // The correctness flag compares what the panel forecast before the
      // step against what the user actually did (top-1 check).
      const previousTop = this.predictions[0];
      const flag: Flag =
        previousTop === undefined ? null : previousTop.action === taken.action ? "correct" : "incorrect";
      // A real step supersedes what-if exploration; the server cleared it.
      this.chips = this.chips.filter((c) => c.kind !== "whatif");
      this.chips.push({ label: taken.action, kind: "taken", flag });
      this.banner = body.eof ? "End of session" : null;
      this.applySession(body);
    });
  }

  reset(): Promise<void> {
    return this.enqueue(async () => {
      const body = await this.api.reset(this.requireSession());
      this.chips = [];
      this.banner = null;
      this.applySession(body);
    });
  }

  whatif(action: string): Promise<void> {
    return this.enqueue(async () => {
      const body = await this.api.whatif(this.requireSession(), action);
      this.chips.push({ label: action, kind: "whatif", flag: null });
      this.applySession(body);
    });
  }

  undoWhatif(): Promise<void> {
    return this.enqueue(async () => {
      const body = await this.api.undoWhatif(this.requireSession());
      for (let i = this.chips.length - 1; i >= 0; i -= 1) {
        if (this.chips[i].kind === "whatif") {
          this.chips.splice(i, 1);
          break;
        }
      }
      this.applySession(body);
    });
  }
}
