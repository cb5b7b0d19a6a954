// DOM wiring: one poll loop per view, one in-flight request per category,
// every transition routed through the reducers in state.ts.

import { Client } from "./api.js";
import {
    countdownSeconds,
    initialOperatorView,
    initialWorkerView,
    OperatorView,
    POLL_INTERVAL_MS,
    reduceOperator,
    reduceWorker,
    statusConsistent,
    WorkerView,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

function fmtInterval(interval: [number, number]): string {
    const mmss = (s: number) => `${Math.floor(s / 60)}:${String(Math.floor(s % 60)).padStart(2, "0")}`;
    return `${mmss(interval[0])} – ${mmss(interval[1])}`;
}

export function startWorkerView(client: Client): void {
    let view: WorkerView = initialWorkerView();
    let pollInFlight = false;
    let pollTimer: number | undefined;

    const dispatch = (action: Parameters<typeof reduceWorker>[1]) => {
        view = reduceWorker(view, action);
        render();
    };

    const render = () => {
        el("worker-status").textContent = view.statusLine;
        el("connection").textContent = view.connection === "ok" ? "" : "connection degraded";
        const card = el("task-card");
        const yes = el<HTMLButtonElement>("vote-yes");
        const no = el<HTMLButtonElement>("vote-no");
        if (view.task) {
            card.style.display = "";
            el("task-video").textContent = view.task.video_id;
            el("task-segment").textContent = view.task.segment_id;
            el("task-interval").textContent = fmtInterval(view.task.interval);
            const locked = view.submitState !== "idle";
            yes.disabled = locked;
            no.disabled = locked;
            el("submit-state").textContent = view.submitState;
            el("submit-state").className = `pill ${view.submitState}`;
        } else {
            card.style.display = "none";
            if (view.nextEligibleAt != null) {
                const waitS = Math.max(0, view.nextEligibleAt - (Date.now() / 1000 + view.clockSkew));
                el("worker-status").textContent = `${view.statusLine} (next task in ~${Math.ceil(waitS)}s)`;
            }
        }
    };

    const tickCountdown = () => {
        if (view.task) {
            const left = countdownSeconds(view.task, Date.now() / 1000, view.clockSkew);
            el("task-countdown").textContent = `${Math.floor(left)}s`;
        }
        window.setTimeout(tickCountdown, 500);
    };
    tickCountdown();

    const poll = async () => {
        if (pollInFlight || !view.workerId) return schedulePoll(POLL_INTERVAL_MS);
        pollInFlight = true;
        try {
            const result = await client.nextTask(view.workerId);
            dispatch({
                kind: "poll_ok",
                task: result.task,
                nextEligibleAt: result.nextEligibleAt,
                clientNow: Date.now() / 1000,
            });
        } catch (err) {
            console.error("poll failed", err);
            dispatch({ kind: "poll_err", message: err instanceof Error ? err.message : String(err) });
        } finally {
            pollInFlight = false;
            schedulePoll(view.pollBackoffMs);
        }
    };

    const schedulePoll = (ms: number) => {
        window.clearTimeout(pollTimer);
        pollTimer = window.setTimeout(poll, ms);
    };

    el<HTMLButtonElement>("register").addEventListener("click", async () => {
        const workerId = el<HTMLInputElement>("worker-id").value.trim();
        const identity = el<HTMLSelectElement>("identity-class").value as "signed" | "unsigned";
        const locale = el<HTMLInputElement>("worker-locale").value.trim() || "en-US";
        if (!workerId) return;
        try {
            await client.registerWorker(workerId, identity, locale);
            dispatch({ kind: "registered", workerId });
            schedulePoll(0);
        } catch (err) {
            console.error("registration failed", err);
            el("worker-status").textContent = `registration failed: ${err instanceof Error ? err.message : err}`;
        }
    });

    const vote = async (opinion: "yes" | "no") => {
        if (!view.task || !view.workerId || view.submitState === "sent") return;
        const segmentId = view.task.segment_id;
        dispatch({ kind: "submit" });
        const outcome = await client.submitVote(segmentId, view.workerId, opinion);
        if (outcome.ok) {
            dispatch({ kind: "submit_ok", verdict: outcome.verdict, votes: outcome.votes, quorum: outcome.quorum });
        } else {
            dispatch({ kind: "submit_err", code: outcome.code, message: outcome.message });
        }
        schedulePoll(POLL_INTERVAL_MS);
    };
    el<HTMLButtonElement>("vote-yes").addEventListener("click", () => void vote("yes"));
    el<HTMLButtonElement>("vote-no").addEventListener("click", () => void vote("no"));

    render();
}

export function startOperatorView(client: Client): void {
    let view: OperatorView = initialOperatorView();
    let inFlight = false;

    const dispatch = (action: Parameters<typeof reduceOperator>[1]) => {
        view = reduceOperator(view, action);
        render();
    };

    const render = () => {
        el("operator-stale").textContent = view.stale ? "server unreachable; showing last known state" : "";
        const list = el("decision-list");
        list.innerHTML = "";
        for (const d of view.decisions) {
            const row = document.createElement("div");
            row.className = "decision";
            const chips = d.segments
                .map((s) => `<span class="chip ${s.verdict}" title="${s.segment_id}">${s.verdict}</span>`)
                .join("");
            const warn = statusConsistent(d) ? "" : ` <span class="warn">inconsistent server state</span>`;
            row.innerHTML = `<strong>${d.video_id}</strong> <span class="status ${d.status}">${d.status}</span>${warn}<div>${chips}</div>`;
            list.appendChild(row);
        }
        if (view.lastUpdated != null) {
            el("operator-updated").textContent = `updated ${new Date(view.lastUpdated).toLocaleTimeString()}`;
        }
    };

    const refresh = async () => {
        if (inFlight) return;
        inFlight = true;
        try {
            const ids = view.filter
                .split(",")
                .map((s) => s.trim())
                .filter(Boolean);
            const found: import("./api.js").Decision[] = [];
            for (const id of ids) {
                const d = await client.decision(id);
                if (d) found.push(d); // unknown ids just yield an empty slot
            }
            dispatch({ kind: "decisions_ok", decisions: found, at: Date.now() });
        } catch (err) {
            console.error("decision refresh failed", err);
            dispatch({ kind: "decisions_err" });
        } finally {
            inFlight = false;
            window.setTimeout(refresh, POLL_INTERVAL_MS);
        }
    };

    el<HTMLInputElement>("video-filter").addEventListener("input", (ev) => {
        dispatch({ kind: "set_filter", filter: (ev.target as HTMLInputElement).value });
    });
    void refresh();
    render();
}
