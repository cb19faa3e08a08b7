// Small shared rendering helpers.

// Served numbers are rendered with String(): the shortest decimal
// round-trip form, byte-identical to the JSON literal the API emitted.
// Never reformat with toFixed — the page must show exactly what was served.
export function fmt(value: number | string): string {
  return typeof value === "number" ? String(value) : value;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function windowText(window: { from: string | null; to: string | null }): string {
  return `${window.from ?? "start"} → ${window.to ?? "now"}`;
}
