// Gateway client: REST actions with an until-acknowledged retry queue, and
// a live WebSocket that reconnects with ?since=<last seq> so no event is
// missed or double-applied (delivery is idempotent by seq).

import type { ConversationTurn, PipelineConfigPatch, SessionEvent } from "./types.js";

export interface WebSocketLike {
    onopen: ((ev?: unknown) => void) | null;
    onclose: ((ev?: unknown) => void) | null;
    onerror: ((ev?: unknown) => void) | null;
    onmessage: ((ev: { data: string }) => void) | null;
    close(): void;
}

export type WsFactory = (url: string) => WebSocketLike;
export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
    fetchImpl?: FetchLike;
    wsFactory?: WsFactory;
    reconnectDelayMs?: number;
    maxReconnectDelayMs?: number;
    retryDelayMs?: number;
}

export interface ConnectionHandle {
    close(): void;
}

export class GatewayClient {
    private readonly fetchImpl: FetchLike;
    private readonly wsFactory: WsFactory;
    private readonly reconnectDelayMs: number;
    private readonly maxReconnectDelayMs: number;
    private readonly retryDelayMs: number;
    private queue: Promise<unknown> = Promise.resolve();

    constructor(private readonly baseUrl: string, options: ClientOptions = {}) {
        this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
        this.wsFactory =
            options.wsFactory ??
            ((url) => new WebSocket(url) as unknown as WebSocketLike);
        this.reconnectDelayMs = options.reconnectDelayMs ?? 500;
        this.maxReconnectDelayMs = options.maxReconnectDelayMs ?? 15000;
        this.retryDelayMs = options.retryDelayMs ?? 200;
    }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
            method,
            headers: body === undefined ? undefined : { "content-type": "application/json" },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const text = await response.text();
        if (!response.ok) {
            let detail = text;
            try {
                const parsed = JSON.parse(text) as { code?: string; message?: string };
                if (parsed.code) detail = `${parsed.code}: ${parsed.message ?? ""}`;
            } catch {
                // non-JSON error body, keep raw text
            }
            throw new Error(`${method} ${path} failed (${response.status}): ${detail}`);
        }
        return (text ? JSON.parse(text) : null) as T;
    }

    /** Serializes user actions and retries transport failures until the
     * gateway acknowledges, so nothing is lost across reconnects. 4xx/5xx
     * responses are acknowledgements (the gateway saw the action). */
    private act<T>(run: () => Promise<T>): Promise<T> {
        const attempt = async (): Promise<T> => {
            for (;;) {
                try {
                    return await run();
                } catch (error) {
                    if (error instanceof Error && / failed \(\d+\)/.test(error.message)) {
                        throw error; // acknowledged rejection, surface it
                    }
                    await sleep(this.retryDelayMs);
                }
            }
        };
        const result = this.queue.then(attempt, attempt);
        this.queue = result.catch(() => undefined);
        return result;
    }

    createSession(sourceId?: string): Promise<{ session_id: string }> {
        return this.act(() => this.request("POST", "/v1/sessions", sourceId ? { source_id: sourceId } : {}));
    }

    postFrames(sessionId: string, frames: unknown[]): Promise<{ accepted_keywords: string[] }> {
        return this.act(() => this.request("POST", `/v1/sessions/${sessionId}/frames`, { frames }));
    }

    flush(sessionId: string): Promise<{ turn: ConversationTurn | null }> {
        return this.act(() => this.request("POST", `/v1/sessions/${sessionId}/flush`));
    }

    override(turnId: string, index: number): Promise<ConversationTurn> {
        return this.act(() => this.request("POST", `/v1/turns/${turnId}/override`, { index }));
    }

    putConfig(patch: PipelineConfigPatch): Promise<Record<string, unknown>> {
        return this.act(() => this.request("PUT", "/v1/config", patch));
    }

    getTurn(turnId: string): Promise<ConversationTurn> {
        return this.request("GET", `/v1/turns/${turnId}`);
    }

    getEvents(sessionId: string, since: number): Promise<{ events: SessionEvent[] }> {
        return this.request("GET", `/v1/sessions/${sessionId}/events?since=${since}`);
    }

    /** Live event stream with replay: on every (re)connect the socket URL
     * carries since=<last delivered seq>; duplicates are dropped by seq. */
    connect(
        sessionId: string,
        onEvent: (event: SessionEvent) => void,
        onState?: (state: "connecting" | "live" | "reconnecting") => void,
    ): ConnectionHandle {
        const wsBase = this.baseUrl.replace(/^http/, "ws");
        let lastSeq = 0;
        let closed = false;
        let attempts = 0;
        let socket: WebSocketLike | null = null;

        const open = () => {
            if (closed) return;
            onState?.(attempts === 0 ? "connecting" : "reconnecting");
            socket = this.wsFactory(`${wsBase}/v1/sessions/${sessionId}/live?since=${lastSeq}`);
            socket.onopen = () => {
                attempts = 0;
                onState?.("live");
            };
            socket.onmessage = (message) => {
                const event = JSON.parse(message.data) as SessionEvent;
                if (event.seq <= lastSeq) return; // at-least-once delivery
                lastSeq = event.seq;
                onEvent(event);
            };
            socket.onclose = () => {
                if (closed) return;
                attempts += 1;
                const delay = Math.min(this.reconnectDelayMs * 2 ** (attempts - 1), this.maxReconnectDelayMs);
                setTimeout(open, delay);
            };
            socket.onerror = () => {
                // close follows; reconnect handled there
            };
        };
        open();
        return {
            close: () => {
                closed = true;
                socket?.close();
            },
        };
    }
}

function sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}
