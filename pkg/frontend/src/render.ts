// Pure HTML-string renderer for SessionView; the DOM layer just swaps
// innerHTML and delegates events, so snapshots cover the whole surface.

import { highlightedIndex, type SessionView } from "./state.js";

function esc(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}

export function renderView(view: SessionView): string {
    const parts: string[] = [];
    parts.push(`<div class="connection connection-${view.connection}">${view.connection}</div>`);

    if (view.notice) {
        parts.push(`<div class="notice notice-${esc(view.notice.code)}">${esc(noticeText(view))}</div>`);
    }

    const ticker = view.keywords.length
        ? view.keywords.map((k) => `<span class="keyword">${esc(k)}</span>`).join(" ")
        : '<span class="keyword-empty">no keywords yet</span>';
    parts.push(`<div class="ticker">${ticker}</div>`);

    parts.push(`<div class="phase phase-${view.phase}">${view.phase}${view.queryText ? `: ${esc(view.queryText)}` : ""}</div>`);

    const chosen = highlightedIndex(view);
    const cards = view.candidates.map((c, i) => {
        const classes = ["candidate"];
        if (i === chosen) classes.push("chosen");
        if (i === view.modelIndex && view.overrideIndex !== null && view.overrideIndex !== view.modelIndex) {
            classes.push("model-choice"); // badge: what the engine originally picked
        }
        const img = c.imageSrc
            ? `<img src="${c.imageSrc}" alt="${esc(c.caption)}">`
            : `<div class="placeholder">${esc(c.imageId)}</div>`;
        const score = c.score === null ? "" : `<span class="score">${c.score.toFixed(4)}</span>`;
        return `<figure class="${classes.join(" ")}" data-index="${i}">${img}<figcaption>${esc(c.caption)} ${score}</figcaption></figure>`;
    });
    parts.push(`<div class="grid" data-count="${view.candidates.length}">${cards.join("")}</div>`);

    return parts.join("\n");
}

function noticeText(view: SessionView): string {
    if (!view.notice) return "";
    if (view.notice.code === "EmptyKeywords") return "no keywords accepted";
    return `${view.notice.code}: ${view.notice.message}`;
}
