// The view is a pure function of the session event log: reduce() folds
// events into a SessionView, so replaying a recorded log always reproduces
// the identical rendered state.

import type { CandidateLite, SelectionResult, SessionEvent } from "./types.js";

export type Phase = "collecting" | "synthesizing" | "selecting" | "done" | "failed";
export type Connection = "connecting" | "live" | "reconnecting";

export interface CandidateView {
    imageId: string;
    ordinal: number;
    caption: string;
    score: number | null;
    imageSrc: string | null; // data: URI once the full turn is fetched
}

export interface Notice {
    code: string;
    message: string;
}

export interface SessionView {
    connection: Connection;
    keywords: string[];
    phase: Phase;
    turnId: string | null;
    queryText: string | null;
    candidates: CandidateView[];
    modelIndex: number | null; // the engine's argmax choice (badge)
    overrideIndex: number | null; // human override, highlight winner when set
    scores: number[];
    notice: Notice | null;
    lastSeq: number;
}

export function initialView(): SessionView {
    return {
        connection: "connecting",
        keywords: [],
        phase: "collecting",
        turnId: null,
        queryText: null,
        candidates: [],
        modelIndex: null,
        overrideIndex: null,
        scores: [],
        notice: null,
        lastSeq: 0,
    };
}

/** The candidate the UI highlights: the human override wins over the model. */
export function highlightedIndex(view: SessionView): number | null {
    return view.overrideIndex ?? view.modelIndex;
}

export function reduce(view: SessionView, event: SessionEvent): SessionView {
    const next: SessionView = { ...view, lastSeq: Math.max(view.lastSeq, event.seq) };
    switch (event.kind) {
        case "keyword_accepted": {
            next.keywords = [...view.keywords, String(event.payload["keyword"])];
            next.notice = null;
            return next;
        }
        case "turn_started": {
            next.phase = "synthesizing";
            next.turnId = String(event.payload["turn_id"]);
            next.queryText = String(event.payload["query_text"]);
            next.candidates = [];
            next.scores = [];
            next.modelIndex = null;
            next.overrideIndex = null;
            next.keywords = []; // bound into the running turn now
            next.notice = null;
            return next;
        }
        case "candidates_ready": {
            const lite = event.payload["candidates"] as CandidateLite[];
            next.phase = "selecting";
            next.candidates = lite.map((c) => ({
                imageId: c.image_id,
                ordinal: c.ordinal,
                caption: c.caption,
                score: null,
                imageSrc: null,
            }));
            return next;
        }
        case "selection_made": {
            const selection = event.payload["selection"] as unknown as SelectionResult;
            next.phase = "done";
            next.scores = [...selection.scores];
            next.modelIndex = selection.selected_index;
            next.candidates = view.candidates.map((c, i) => ({ ...c, score: selection.scores[i] ?? null }));
            return next;
        }
        case "turn_overridden": {
            next.overrideIndex = Number(event.payload["override"]);
            return next;
        }
        case "error": {
            next.notice = {
                code: String(event.payload["code"]),
                message: String(event.payload["message"]),
            };
            if (view.phase === "synthesizing" || view.phase === "selecting") {
                next.phase = "failed";
            }
            return next;
        }
        default:
            return next;
    }
}

export function replay(events: SessionEvent[], from?: SessionView): SessionView {
    return events.reduce(reduce, from ?? initialView());
}

/** Attach fetched image bytes (base64 PNG) to the matching candidates. */
export function withImages(view: SessionView, images: Map<string, string>): SessionView {
    return {
        ...view,
        candidates: view.candidates.map((c) => ({
            ...c,
            imageSrc: images.has(c.imageId) ? `data:image/png;base64,${images.get(c.imageId)}` : c.imageSrc,
        })),
    };
}
