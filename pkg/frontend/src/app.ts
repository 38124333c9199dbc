// Browser bootstrap: mounts the console, wires camera/file capture, the
// flush button, candidate clicks (override), and the config panel to the
// gateway client. All view logic lives in the pure reducer/renderer.

import { GatewayClient } from "./client.js";
import { initialView, reduce, withImages, type SessionView } from "./state.js";
import { renderView } from "./render.js";
import { isAllowedResolution } from "./types.js";

export async function mountConsole(root: HTMLElement, gatewayUrl: string): Promise<void> {
    const client = new GatewayClient(gatewayUrl);
    const { session_id: sessionId } = await client.createSession("console");
    let view: SessionView = initialView();
    const images = new Map<string, string>();

    const paint = () => {
        root.querySelector(".view")!.innerHTML = renderView(withImages(view, images));
    };

    root.innerHTML = `
      <div class="console">
        <div class="view"></div>
        <div class="controls">
          <input type="file" class="clip-upload" accept=".mclip">
          <button class="flush">flush</button>
          <form class="config">
            <label>K <input name="k" type="number" min="1" value="8"></label>
            <label>steps <input name="steps" type="number" min="1" max="200" value="20"></label>
            <label>resolution
              <select name="resolution">
                <option>512x512</option><option>512x448</option><option>448x448</option>
                <option>512x384</option><option>448x384</option><option>512x320</option>
                <option>384x384</option>
              </select>
            </label>
            <label>threshold <input name="confidence_threshold" type="number" step="0.05" min="0" max="1" value="0.5"></label>
            <button type="submit">apply</button>
            <span class="config-status"></span>
          </form>
        </div>
      </div>`;
    paint();

    client.connect(
        sessionId,
        async (event) => {
            view = reduce(view, event);
            if (event.kind === "selection_made") {
                const turn = await client.getTurn(String(event.payload["turn_id"]));
                for (const pair of turn.candidates) {
                    images.set(pair.image.image_id, pair.image.png_bytes);
                }
            }
            paint();
        },
        (state) => {
            view = { ...view, connection: state === "live" ? "live" : state };
            paint();
        },
    );

    root.querySelector<HTMLButtonElement>(".flush")!.addEventListener("click", () => {
        void client.flush(sessionId);
    });

    root.querySelector<HTMLInputElement>(".clip-upload")!.addEventListener("change", async (event) => {
        const file = (event.target as HTMLInputElement).files?.[0];
        if (!file) return;
        const body = new Uint8Array(await file.arrayBuffer());
        await fetch(`${gatewayUrl}/v1/sessions/${sessionId}/frames`, {
            method: "POST",
            headers: { "content-type": "application/octet-stream" },
            body,
        });
    });

    root.querySelector(".view")!.addEventListener("click", (event) => {
        const figure = (event.target as HTMLElement).closest<HTMLElement>(".candidate");
        if (figure && view.turnId) {
            void client.override(view.turnId, Number(figure.dataset["index"]));
        }
    });

    root.querySelector<HTMLFormElement>(".config")!.addEventListener("submit", async (event) => {
        event.preventDefault();
        const form = event.target as HTMLFormElement;
        const data = new FormData(form);
        const [w, h] = String(data.get("resolution")).split("x").map(Number);
        const status = form.querySelector<HTMLElement>(".config-status")!;
        if (!isAllowedResolution(w!, h!)) {
            status.textContent = `rejected: ${w}x${h} is not one of the seven resolutions`;
            return;
        }
        try {
            await client.putConfig({
                k: Number(data.get("k")),
                steps: Number(data.get("steps")),
                width: w,
                height: h,
                confidence_threshold: Number(data.get("confidence_threshold")),
            });
            status.textContent = "applies next turn";
        } catch (error) {
            status.textContent = String(error);
        }
    });
}
