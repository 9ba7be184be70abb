import type {
  AnomaliesResponse,
  GridPayload,
  KappaResponse,
  PatternDetail,
  PatternItem,
} from "./types.js";

/** Renderers are pure string builders. Every number is printed with
 * String(...) straight from the payload; the console does no arithmetic on
 * displayed values. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function cell(value: number | null): string {
  return value === null ? "NA" : String(value);
}

export function renderGrid(grid: GridPayload, title: string): string {
  const head = grid.columns.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const rows = grid.rows
    .map((row) => {
      const cells = grid.columns
        .map((col) => `<td data-row="${escapeHtml(row)}" data-col="${escapeHtml(col)}">${cell(grid.cells[row][col])}</td>`)
        .join("");
      return `<tr><th>${escapeHtml(row)}</th>${cells}</tr>`;
    })
    .join("");
  return (
    `<section class="grid"><h2>${escapeHtml(title)}</h2>` +
    `<table><thead><tr><th></th>${head}</tr></thead><tbody>${rows}</tbody></table></section>`
  );
}

export function renderKappaSummary(report: KappaResponse): string {
  const parts: string[] = [];
  const entries: Array<[string, Record<string, unknown> | null, number]> = [
    ["overall", report.overall, report.overall_items],
    ["composite", report.composite, report.composite_items],
    ["direct", report.direct, report.direct_items],
  ];
  for (const [label, data, items] of entries) {
    if (data && typeof data.kappa === "number") {
      parts.push(
        `<div class="kappa" data-kind="${label}">${label}: ` +
        `<b>${String(data.kappa)}</b> over ${String(items)} patterns</div>`,
      );
    } else {
      parts.push(`<div class="kappa" data-kind="${label}">${label}: NA</div>`);
    }
  }
  return `<section class="kappa-summary">${parts.join("")}</section>`;
}

const HEAT_CLASSES = ["h0", "h1", "h2", "h3", "h4"];

function heatClass(count: number): string {
  return HEAT_CLASSES[Math.min(count, HEAT_CLASSES.length - 1)];
}

export function renderHeatmap(report: AnomaliesResponse): string {
  const categories = ["Error", "NonError"];
  const head = report.participants
    .map((p) => categories.map((c) => `<th>${escapeHtml(p)} ${c}</th>`).join(""))
    .join("");
  const rows = report.question_ids
    .map((qid) => {
      const cells = report.participants
        .map((pid) =>
          categories
            .map((cat) => {
              const count = report.counts[`${pid}|${qid}|${cat}`] ?? 0;
              return `<td class="${heatClass(count)}" data-bin="${pid}|${qid}|${cat}">${String(count)}</td>`;
            })
            .join(""),
        )
        .join("");
      const flag = report.double_zero.includes(qid) ? " class=\"double-zero\"" : "";
      return `<tr${flag}><th>${escapeHtml(qid)}</th>${cells}</tr>`;
    })
    .join("");
  const zeros = report.double_zero.length
    ? `<p class="double-zero-note">double-zero questions: ${report.double_zero.map(escapeHtml).join(", ")}</p>`
    : "";
  return (
    `<section class="heatmap"><h2>Anomaly distribution</h2>` +
    `<table><thead><tr><th></th>${head}</tr></thead><tbody>${rows}</tbody></table>` +
    `${zeros}<p>threshold ${String(report.threshold)}; flagged ${String(report.flagged)} ` +
    `of ${String(report.windows)} windows</p></section>`
  );
}

export function renderQueueItem(item: PatternItem, detail: PatternDetail | null): string {
  const provenance = `${item.stage} / ${item.prompt_level} / ${item.model_id}` +
    (item.frequency_class ? ` / ${item.frequency_class}-frequency` : "");
  let evidence = "";
  if (detail) {
    const rows = detail.evidence
      .map(
        (e, i) =>
          `<tr><td>#${String(e.rank)}</td><td>${escapeHtml(e.quartile)}</td>` +
          `<td>${String(e.stance)}</td><td>${String(detail.components[i] ?? "")}</td></tr>`,
      )
      .join("");
    evidence =
      `<table class="evidence"><thead><tr><th>rank</th><th>quartile</th>` +
      `<th>stance</th><th>score</th></tr></thead><tbody>${rows}</tbody></table>` +
      `<p>literature total <b>${detail.total === null ? "NA" : String(detail.total)}</b> ` +
      `(${detail.literature_verdict ?? "unscored"})</p>`;
  }
  return (
    `<article class="pattern" data-id="${item.id}">` +
    `<p class="provenance">${escapeHtml(provenance)}</p>` +
    `<blockquote>${escapeHtml(item.text)}</blockquote>${evidence}` +
    `<p class="hint">Press <kbd>V</kbd> for valid, <kbd>I</kbd> for invalid</p></article>`
  );
}

export function renderQueueStatus(remaining: number, pendingPosts: number): string {
  const offline = pendingPosts > 0 ? ` - ${String(pendingPosts)} verdict(s) queued for retry` : "";
  return `<p class="status">${String(remaining)} pattern(s) left to review${offline}</p>`;
}
