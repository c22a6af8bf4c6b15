// Pure helpers for the monitor view's bar chart. Geometry (bar lengths,
// whisker extents) is computed here; the *displayed* numbers are always the
// API values verbatim (see format()).
/** Verbatim rendering of an API number: no rounding, no reformatting. */
export function format(value) {
    return String(value);
}
/** Sort by rank, then label for stable display of ties. */
export function sortByRank(scores) {
    return [...scores].sort((a, b) => a.rank - b.rank || a.label.localeCompare(b.label));
}
/**
 * Map scores to horizontal bars with +-1 standard deviation whiskers.
 * The axis spans [min(mean - sd), max(mean + sd)] so every whisker fits;
 * a degenerate span (fresh session, all equal) centers everything.
 */
export function layoutBars(scores) {
    const sorted = sortByRank(scores);
    const lows = sorted.map((s) => s.mean - Math.sqrt(s.variance));
    const highs = sorted.map((s) => s.mean + Math.sqrt(s.variance));
    const lo = Math.min(0, ...lows);
    const hi = Math.max(0, ...highs);
    const span = hi - lo || 1;
    const pos = (x) => ((x - lo) / span) * 100;
    return sorted.map((s, k) => {
        const sd = Math.sqrt(s.variance);
        const zero = pos(0);
        const mean = pos(s.mean);
        return {
            label: s.label,
            rank: s.rank,
            meanText: format(s.mean),
            sdText: format(sd),
            barLeft: Math.min(zero, mean),
            barWidth: Math.abs(mean - zero),
            whiskerLeft: pos(s.mean - sd),
            whiskerWidth: pos(s.mean + sd) - pos(s.mean - sd),
        };
    });
}
