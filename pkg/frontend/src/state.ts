// Pure view-state reducers. Every transition in the console flows through
// these; the DOM layer only dispatches actions and renders the result, so
// the interesting behavior is unit-testable without a browser.

import type { Decision, Task } from "./api.js";

export type SubmitState = "idle" | "sent" | "acked" | "rejected";

export interface WorkerView {
    workerId: string | null;
    task: Task | null;
    submitState: SubmitState;
    /** rejection code rendered distinctly: terminal vs duplicate vs other */
    rejectionCode: string | null;
    statusLine: string;
    connection: "ok" | "degraded";
    pollBackoffMs: number;
    nextEligibleAt: number | null;
    /** server clock minus client clock, for honest countdowns */
    clockSkew: number;
}

export const POLL_INTERVAL_MS = 2000;
const MAX_BACKOFF_MS = 30_000;

export function initialWorkerView(): WorkerView {
    return {
        workerId: null,
        task: null,
        submitState: "idle",
        rejectionCode: null,
        statusLine: "not registered",
        connection: "ok",
        pollBackoffMs: POLL_INTERVAL_MS,
        nextEligibleAt: null,
        clockSkew: 0,
    };
}

export type WorkerAction =
    | { kind: "registered"; workerId: string }
    | { kind: "poll_ok"; task: Task | null; nextEligibleAt: number | null; clientNow: number }
    | { kind: "poll_err"; message: string }
    | { kind: "submit" }
    | { kind: "submit_ok"; verdict: string; votes: number; quorum: number }
    | { kind: "submit_err"; code: string; message: string };

export function reduceWorker(view: WorkerView, action: WorkerAction): WorkerView {
    switch (action.kind) {
        case "registered":
            return { ...initialWorkerView(), workerId: action.workerId, statusLine: "registered; polling" };
        case "poll_ok": {
            const next = { ...view, connection: "ok" as const, pollBackoffMs: POLL_INTERVAL_MS };
            if (view.submitState === "sent") return next; // never clobber an in-flight submission
            if (action.task) {
                const skew = action.task.server_time != null ? action.task.server_time - action.clientNow : view.clockSkew;
                const fresh = action.task.segment_id !== view.task?.segment_id;
                return {
                    ...next,
                    task: action.task,
                    clockSkew: skew,
                    submitState: fresh ? "idle" : view.submitState,
                    rejectionCode: fresh ? null : view.rejectionCode,
                    statusLine: fresh ? "task assigned" : view.statusLine,
                    nextEligibleAt: null,
                };
            }
            return {
                ...next,
                task: null,
                submitState: "idle",
                rejectionCode: null,
                nextEligibleAt: action.nextEligibleAt,
                statusLine: action.nextEligibleAt != null ? "idle; cooling down" : "idle; no open task",
            };
        }
        case "poll_err":
            return {
                ...view,
                connection: "degraded",
                pollBackoffMs: Math.min(view.pollBackoffMs * 2, MAX_BACKOFF_MS),
                statusLine: `poll failed: ${action.message}; retrying`,
            };
        case "submit":
            if (view.submitState === "sent" || !view.task) return view; // client-side idempotence
            return { ...view, submitState: "sent", statusLine: "submitting opinion" };
        case "submit_ok":
            return {
                ...view,
                submitState: "acked",
                statusLine: `opinion recorded (${action.votes}/${action.quorum} votes)`,
            };
        case "submit_err":
            return {
                ...view,
                submitState: "rejected",
                rejectionCode: action.code,
                statusLine:
                    action.code === "terminal"
                        ? "segment already decided; opinion not counted"
                        : action.code === "duplicate"
                          ? "already voted on this segment"
                          : `submission rejected: ${action.message}`,
            };
    }
}

/** Seconds left on a task, never negative; skew keeps it on server time. */
export function countdownSeconds(task: Task, clientNow: number, clockSkew: number): number {
    if (task.deadline == null) return 0;
    return Math.max(0, task.deadline - (clientNow + clockSkew));
}

// ------------------------------------------------------------- operator

export interface OperatorView {
    filter: string;
    decisions: Decision[];
    stale: boolean;
    lastUpdated: number | null;
}

export function initialOperatorView(): OperatorView {
    return { filter: "", decisions: [], stale: false, lastUpdated: null };
}

export type OperatorAction =
    | { kind: "set_filter"; filter: string }
    | { kind: "decisions_ok"; decisions: Decision[]; at: number }
    | { kind: "decisions_err" };

export function reduceOperator(view: OperatorView, action: OperatorAction): OperatorView {
    switch (action.kind) {
        case "set_filter":
            return { ...view, filter: action.filter };
        case "decisions_ok":
            return { ...view, decisions: action.decisions, stale: false, lastUpdated: action.at };
        case "decisions_err":
            return { ...view, stale: true }; // keep showing the last good data
    }
}

/**
 * Cross-check the server's overall status against its own chips. The console
 * never derives verdicts; this only flags an inconsistent server response.
 */
export function statusConsistent(decision: Decision): boolean {
    const verdicts = decision.segments.map((s) => s.verdict);
    const expected = verdicts.some((v) => v === "no")
        ? "unsafe"
        : verdicts.some((v) => v === "open")
          ? "in-review"
          : verdicts.every((v) => v === "yes")
            ? "safe"
            : "unresolved";
    if (decision.segments.length === 0) return decision.status === "pending" || decision.status === "in-review";
    return decision.status === expected;
}
