// Wire types for the gateway's REST/WS API (canonical JSON field names).

export type EventKind =
    | "keyword_accepted"
    | "turn_started"
    | "candidates_ready"
    | "selection_made"
    | "turn_overridden"
    | "error";

export interface SessionEvent {
    seq: number;
    kind: EventKind;
    payload: Record<string, unknown>;
}

export interface SelectionResult {
    selected_index: number;
    selected_image: string;
    selected_caption: string;
    scores: number[];
}

export interface CandidateLite {
    image_id: string;
    ordinal: number;
    caption: string;
}

export interface GeneratedImage {
    image_id: string;
    request_ref: string;
    ordinal: number;
    png_bytes: string; // base64
}

export interface CandidatePair {
    image: GeneratedImage;
    caption: { image_ref: string; text: string };
    caption_embedding: { vector: number[]; dim: number } | null;
    score: number | null;
}

export interface ConversationTurn {
    turn_id: string;
    keywords: { keywords: string[]; accepted_at: string[] };
    query_text: string;
    candidates: CandidatePair[];
    selection: SelectionResult;
    stage_timings_ms: Record<string, number>;
    override: number | null;
}

export interface PipelineConfigPatch {
    k?: number;
    steps?: number;
    width?: number;
    height?: number;
    confidence_threshold?: number;
    [key: string]: unknown;
}

export const ALLOWED_RESOLUTIONS: ReadonlyArray<readonly [number, number]> = [
    [512, 512],
    [512, 448],
    [448, 448],
    [512, 384],
    [448, 384],
    [512, 320],
    [384, 384],
];

export function isAllowedResolution(width: number, height: number): boolean {
    return ALLOWED_RESOLUTIONS.some(([w, h]) => w === width && h === height);
}
