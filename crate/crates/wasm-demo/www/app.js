import init, { catalog, render_prompt, score_first_token, explore_calibration } from "./pkg/ftp_harness_web.js";

const $ = (id) => document.getElementById(id);

function escapeHtml(s) {
  return s.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function visible(s) {
  return escapeHtml(s).replace(/\n/g, "␊\n");
}

function fail(el, e) {
  el.innerHTML = `<span class="err">${escapeHtml(String(e.message ?? e))}</span>`;
}

// --- 1. prompt rendering ---------------------------------------------------

function updatePrompt() {
  const question = JSON.stringify({
    stem: $("stem").value,
    options: $("options").value.split("\n").filter((l) => l.trim() !== ""),
  });
  const mode = $("mode").value;
  $("template").disabled = mode !== "prefill";
  try {
    const text = render_prompt(question, $("format").value, mode, $("template").value);
    if (mode === "prefill") {
      const tpl = $("template").selectedOptions[0].dataset.text;
      const head = text.slice(0, text.length - tpl.length);
      $("prompt").innerHTML = visible(head) + `<span class="prefill">${visible(tpl)}</span>`;
    } else {
      $("prompt").innerHTML = visible(text);
    }
  } catch (e) {
    fail($("prompt"), e);
  }
}

// --- 2. first-token scoring ------------------------------------------------

function parseCandidates(text) {
  return text
    .split("\n")
    .filter((l) => l.trim() !== "")
    .map((line, i) => {
      const m = line.match(/^\s*(".*")\s+([-+0-9.eE]+)\s*$/);
      if (!m) throw new Error(`line ${i + 1}: expected "token" probability`);
      return [JSON.parse(m[1]), Number(m[2])];
    });
}

function pct(x) {
  return (100 * x).toFixed(2) + "%";
}

function updateScore() {
  const out = $("score");
  try {
    const input = {
      n_options: Number($("nopt").value),
      gold_index: Number($("gold").value),
      candidates: parseCandidates($("cands").value),
      second_token: $("second").value,
      strict: $("strict").checked,
    };
    const r = JSON.parse(score_first_token(JSON.stringify(input)));
    const rows = r.option_mass
      .map(([l, m], i) => `<tr><th>${l}</th><td>${m.toFixed(4)}</td><td>${pct(r.normalized[i][1])}</td></tr>`)
      .join("");
    const verdict = (ok) => (ok ? '<span class="ok">correct</span>' : '<span class="bad">wrong</span>');
    out.innerHTML = `
      <p>Top-1 token <code>${escapeHtml(JSON.stringify(r.top1_token))}</code> is
        ${r.is_valid ? `<span class="ok">a valid answer (${r.matched_label})</span>` : '<span class="bad">not a valid answer</span>'}.
        Full-vocabulary judgment: ${verdict(r.correct_full_vocab)}.</p>
      <p>Restricted choice <b>${r.restricted_choice}</b>: ${verdict(r.correct_restricted)}
        ${r.degenerate ? " — no option had any mass; fell back to the first label" : ""}</p>
      <table><tr><th>label</th><th>mass</th><th>renormalized</th></tr>${rows}</table>`;
  } catch (e) {
    fail(out, e);
  }
}

// --- 3. calibration ----------------------------------------------------------

function drawDiagram(bins) {
  const c = $("diagram");
  const g = c.getContext("2d");
  const pad = 40;
  const size = c.width - 2 * pad;
  const X = (v) => pad + v * size;
  const Y = (v) => c.height - pad - v * size;
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, size, size);
  g.setLineDash([4, 4]);
  g.beginPath();
  g.moveTo(X(0), Y(0));
  g.lineTo(X(1), Y(1));
  g.stroke();
  g.setLineDash([]);
  const maxCount = Math.max(1, ...bins.map((b) => b.count));
  for (const b of bins) {
    const w = (b.bin_hi - b.bin_lo) * size;
    g.fillStyle = "rgba(80,120,200,0.15)";
    const h = (b.count / maxCount) * size * 0.25;
    g.fillRect(X(b.bin_lo), Y(0) - h, w, h);
    if (b.accuracy != null) {
      g.fillStyle = "rgba(40,80,170,0.75)";
      g.fillRect(X(b.bin_lo) + 1, Y(b.accuracy), w - 2, b.accuracy * size);
      g.fillStyle = "#c2410c";
      g.beginPath();
      g.arc(X(b.mean_conf), Y(b.mean_conf), 3, 0, 2 * Math.PI);
      g.fill();
    }
  }
  g.fillStyle = "#333";
  g.font = "12px system-ui";
  g.fillText("confidence (argmax probability)", pad + size / 2 - 90, c.height - 10);
  g.save();
  g.translate(14, pad + size / 2 + 30);
  g.rotate(-Math.PI / 2);
  g.fillText("accuracy", 0, 0);
  g.restore();
  for (const t of [0, 0.5, 1]) {
    g.fillText(String(t), X(t) - 6, Y(0) + 14);
    g.fillText(String(t), pad - 22, Y(t) + 4);
  }
}

function updateCalibration() {
  for (const s of document.querySelectorAll(".slider")) {
    s.querySelector("output").textContent = s.querySelector("input").value;
  }
  const input = {
    n: Number($("n").value),
    k: Number($("k").value),
    skill: Number($("skill").value),
    sharpness: Number($("sharp").value),
    seed: Number($("seed").value),
    bins: Number($("bins").value),
  };
  try {
    const r = JSON.parse(explore_calibration(JSON.stringify(input)));
    const ace = r.ace == null ? "n/a (fewer items than ranges)" : r.ace.toFixed(4);
    $("calmetrics").innerHTML = `
      <table>
        <tr><th>accuracy</th><td>${pct(r.accuracy)}</td></tr>
        <tr><th>ACE</th><td>${ace}</td></tr>
        <tr><th>Brier ×100</th><td>${r.brier_x100.toFixed(3)}</td></tr>
        <tr><th>log loss</th><td>${r.log_loss.toFixed(4)}</td></tr>
      </table>
      <p>Bars: per-bin accuracy. Dots: mean confidence. Shaded: item count.</p>`;
    drawDiagram(r.bins);
  } catch (e) {
    fail($("calmetrics"), e);
  }
}

// --- wiring ------------------------------------------------------------------

await init();
const cat = JSON.parse(catalog());
for (const name of cat.chat_formats) {
  $("format").add(new Option(name, name));
}
for (const [id, text] of cat.templates) {
  const o = new Option(`${id}: ${text}`, id, false, id === cat.default_template);
  o.dataset.text = text;
  $("template").add(o);
}

for (const id of ["stem", "options", "format", "mode", "template"]) {
  $(id).addEventListener("input", updatePrompt);
}
for (const id of ["cands", "nopt", "gold", "second", "strict"]) {
  $(id).addEventListener("input", updateScore);
}
for (const id of ["n", "k", "skill", "sharp", "bins", "seed"]) {
  $(id).addEventListener("input", updateCalibration);
}
updatePrompt();
updateScore();
updateCalibration();
