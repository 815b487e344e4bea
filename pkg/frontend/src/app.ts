// DOM entry point. Two routes share one bundle: the experimenter view
// (session control, live heatmap, event log, summary) and the blinded
// participant view (#participant: response buttons and a prompt only,
// no presented-condition information anywhere).

import { SessionController } from "./controller.js";
import { drawHeatmap } from "./heatmap.js";
import { runningAccuracy, type SessionView } from "./session.js";
import { CONDITIONS, type Condition } from "./types.js";

const participantMode = location.hash.includes("participant");
const wsUrl = `ws://${location.host}/live`;
const controller = new SessionController(wsUrl);

const $ = (id: string) => document.getElementById(id)!;

function buildResponseButtons(): void {
  const holder = $("choices");
  for (const condition of CONDITIONS) {
    const button = document.createElement("button");
    button.className = "choice";
    button.id = `choice-${condition}`;
    button.textContent = condition;
    button.addEventListener("click", () => {
      const ok = controller.submitResponse(condition as Condition);
      if (!ok) flashRejection("press ignored (outside response window)");
    });
    holder.appendChild(button);
  }
}

let flashTimer: ReturnType<typeof setTimeout> | null = null;
function flashRejection(text: string): void {
  const el = $("rejection");
  el.textContent = text;
  el.classList.add("visible");
  if (flashTimer) clearTimeout(flashTimer);
  flashTimer = setTimeout(() => el.classList.remove("visible"), 1200);
}

function renderSummary(view: SessionView): void {
  const host = $("summary");
  if (!view.stats) {
    host.innerHTML = "";
    return;
  }
  const s = view.stats;
  const pct = (x: number) => `${(x * 100).toFixed(0)}%`;
  let rows = "";
  for (const c of s.conditions) {
    rows += `<tr><td>${c}</td><td>${pct(s.per_condition_accuracy[c] ?? 0)}</td>` +
      `<td>${(s.per_condition_mean_rt_s[c] ?? 0).toFixed(2)} s</td></tr>`;
  }
  const confusion = s.confusion
    .map((row, i) => `<tr><td>${s.conditions[i]}</td>` +
      row.map((n) => `<td>${n}</td>`).join("") + "</tr>")
    .join("");
  host.innerHTML = `
    <h2>${view.complete ? "Session complete" : "Session ended early"}</h2>
    <table class="stats">
      <tr><th>condition</th><th>accuracy</th><th>mean RT</th></tr>
      ${rows}
      <tr class="total"><td>overall</td><td>${pct(s.overall_accuracy)}</td>
        <td>${s.overall_mean_rt_s.toFixed(2)} s</td></tr>
    </table>
    <h3>Confusion (rows presented, columns responded)</h3>
    <table class="stats">
      <tr><th></th>${s.conditions.map((c) => `<th>${c}</th>`).join("")}</tr>
      ${confusion}
    </table>`;
}

function render(view: SessionView): void {
  $("banner").className = view.connected ? "banner ok" : "banner lost";
  $("banner").textContent = view.connected
    ? "bridge connected"
    : "connection lost - retrying...";

  const phase = $("phase");
  phase.textContent = view.phase;
  phase.className = `phase ${view.phase}`;

  $("progress").textContent = view.totalTrials
    ? `trial ${Math.max(view.trialIndex + 1, 1)} of ${view.totalTrials}`
    : "no session";

  const prompt = $("prompt");
  if (view.phase === "awaiting-response") {
    prompt.textContent = "respond now";
    prompt.classList.add("active");
  } else {
    prompt.textContent = view.phase === "done" ? "done - thank you" : "wait...";
    prompt.classList.remove("active");
  }

  const enabled = view.connected && view.phase === "awaiting-response"
    && !view.responseLocked;
  for (const condition of CONDITIONS) {
    ($(`choice-${condition}`) as HTMLButtonElement).disabled = !enabled;
  }

  if (!participantMode) {
    const acc = runningAccuracy(view);
    $("accuracy").textContent = acc === null
      ? "accuracy: -"
      : `accuracy: ${(acc * 100).toFixed(0)}% (${view.answered} answered)`;
    $("device").textContent = view.device
      ? `device: surface ${view.device.surface_mm.toFixed(3)} mm, ` +
        `edge ${view.device.edge_mm.toFixed(3)} mm` +
        `${view.device.moving ? ", moving" : ""}` +
        `${view.engineConnected ? " | external engine attached" : ""}`
      : "device: unknown";
    $("log").textContent = view.log.slice(-14).join("\n");
    drawHeatmap($("heatmap") as HTMLCanvasElement, view.lastFrame);
    renderSummary(view);
    ($("start") as HTMLButtonElement).disabled =
      !view.connected || view.sessionActive;
    ($("abort") as HTMLButtonElement).disabled = !view.sessionActive;
  } else if (view.phase === "done") {
    // the participant only ever sees their own overall accuracy
    const acc = view.stats ? (view.stats.overall_accuracy * 100).toFixed(0) : "-";
    $("progress").textContent = `finished - overall accuracy ${acc}%`;
  }
}

function main(): void {
  document.body.classList.toggle("participant", participantMode);
  buildResponseButtons();
  if (!participantMode) {
    $("start").addEventListener("click", () => {
      const reps = Number(($("reps") as HTMLInputElement).value) || 1;
      controller.startSession({ repetitions: reps,
                                label: `browser-${Date.now()}` });
    });
    $("abort").addEventListener("click", () => controller.abortSession());
  }
  controller.subscribe(render);
  controller.connect();
}

main();
