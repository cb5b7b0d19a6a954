// Typed client for the crowdgate service endpoints. The server is the
// single source of truth; nothing here aggregates or decides.

export interface Task {
    segment_id: string;
    video_id: string;
    interval: [number, number];
    deadline: number | null;
    server_time?: number;
}

export interface SegmentDetail {
    segment_id: string;
    interval: [number, number];
    verdict: "open" | "yes" | "no" | "unresolved";
    votes: number;
    shortfall: boolean;
}

export interface Decision {
    video_id: string;
    status: "pending" | "in-review" | "safe" | "unsafe" | "unresolved";
    created_at: number;
    finalized_at: number | null;
    segments: SegmentDetail[];
}

export interface PollResult {
    task: Task | null;
    nextEligibleAt: number | null;
}

export type VoteOutcome =
    | { ok: true; verdict: string; votes: number; quorum: number }
    | { ok: false; code: string; message: string };

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

async function errorBody(resp: Response): Promise<{ code: string; message: string }> {
    try {
        const doc = await resp.json();
        return { code: doc.error ?? "unknown", message: doc.message ?? resp.statusText };
    } catch {
        return { code: "unknown", message: resp.statusText };
    }
}

export class Client {
    constructor(public baseUrl: string) {}

    private url(path: string): string {
        return this.baseUrl.replace(/\/$/, "") + path;
    }

    async registerWorker(id: string, identityClass: "signed" | "unsigned", locale: string): Promise<void> {
        const resp = await fetch(this.url("/workers"), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ id, identity_class: identityClass, locale }),
        });
        // an already-registered id is fine for a reconnecting worker
        if (!resp.ok && resp.status !== 409) {
            const err = await errorBody(resp);
            throw new ApiError(resp.status, err.message);
        }
        if (resp.ok || resp.status === 409) await resp.text().catch(() => "");
    }

    async registerVideo(id: string, durationS: number, locale: string): Promise<string[]> {
        const resp = await fetch(this.url("/videos"), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ id, duration_s: durationS, locale }),
        });
        if (!resp.ok) {
            const err = await errorBody(resp);
            throw new ApiError(resp.status, err.message);
        }
        const doc = await resp.json();
        return doc.segments as string[];
    }

    async nextTask(workerId: string): Promise<PollResult> {
        const resp = await fetch(this.url(`/workers/${encodeURIComponent(workerId)}/tasks`));
        if (resp.status === 204) {
            const hint = resp.headers.get("X-Next-Eligible-At");
            return { task: null, nextEligibleAt: hint ? parseFloat(hint) : null };
        }
        if (!resp.ok) {
            const err = await errorBody(resp);
            throw new ApiError(resp.status, err.message);
        }
        return { task: (await resp.json()) as Task, nextEligibleAt: null };
    }

    async submitVote(segmentId: string, workerId: string, opinion: "yes" | "no"): Promise<VoteOutcome> {
        const resp = await fetch(this.url("/votes"), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ segment_id: segmentId, worker_id: workerId, opinion }),
        });
        if (resp.ok) {
            const doc = await resp.json();
            return { ok: true, verdict: doc.verdict, votes: doc.votes, quorum: doc.quorum };
        }
        const err = await errorBody(resp);
        return { ok: false, code: err.code, message: err.message };
    }

    async decision(videoId: string): Promise<Decision | null> {
        const resp = await fetch(this.url(`/videos/${encodeURIComponent(videoId)}/decision`));
        if (resp.status === 404) return null;
        if (!resp.ok) {
            const err = await errorBody(resp);
            throw new ApiError(resp.status, err.message);
        }
        return (await resp.json()) as Decision;
    }

    async metrics(): Promise<Record<string, unknown>> {
        const resp = await fetch(this.url("/metrics"));
        if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
        return (await resp.json()) as Record<string, unknown>;
    }
}
