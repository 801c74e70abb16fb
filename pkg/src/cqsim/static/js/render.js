// Scene and inspector rendering as pure string/data builders (SVG markup),
// so the drawing rules stay unit-testable without a DOM.
export const SIZE_SCALE = {
    small: 0.6,
    medium: 1.0,
    large: 1.5,
};
export const GLYPHS = {
    boy: "🧒", girl: "👧", tree: "🌳", "pine tree": "🌲", "maple tree": "🍁",
    sun: "☀️", cloud: "☁️", "rain cloud": "🌧️", "storm cloud": "⛈️", bear: "🐻",
    cat: "🐱", dog: "🐶", duck: "🦆", owl: "🦉", snake: "🐍", swing: "🛝",
    slide: "🛝", sandbox: "🏖️", seesaw: "⚖️", tent: "⛺", grill: "♨️",
    campfire: "🔥", table: "🪑", bench: "🪑", bush: "🌿", flower: "🌸",
    balloons: "🎈", kite: "🪁", "soccer ball": "⚽", basketball: "🏀",
    baseball: "⚾", "beach ball": "🏐", "tennis ball": "🎾", football: "🏈",
    frisbee: "🥏", pie: "🥧", pizza: "🍕", "hot dog": "🌭", hamburger: "🍔",
    soda: "🥤", ketchup: "🍅", mustard: "🟡", apple: "🍎", juice: "🧃",
    "baseball bat": "🏏", "baseball glove": "🧤", "tennis racket": "🎾",
    shovel: "🪏", pail: "🪣", sunglasses: "🕶️", hat: "👒", crown: "👑",
    "witch hat": "🧙", "pirate hat": "🏴‍☠️", "chef hat": "👨‍🍳", rocket: "🚀",
    airplane: "✈️", bird: "🐦",
};
export const PLACEHOLDER_GLYPH = "❓";
export function glyphFor(name) {
    return GLYPHS[name] ?? PLACEHOLDER_GLYPH;
}
/** Glyphs face left by default; facing_right mirrors them horizontally. */
export function glyphSpec(placement, names, width, height) {
    const name = names.get(placement.clipart);
    return {
        x: placement.x * width,
        y: placement.y * height,
        scale: SIZE_SCALE[placement.size],
        mirrored: placement.flip === "facing_right",
        glyph: name === undefined ? PLACEHOLDER_GLYPH : glyphFor(name),
        label: name ?? `#${placement.clipart}`,
    };
}
export function nameMap(gallery) {
    return new Map(gallery.map((e) => [e.id, e.name]));
}
const BASE_FONT = 28;
export function sceneToSvg(scene, gallery, width = 400, height = 320) {
    const names = nameMap(gallery);
    const parts = [];
    const sorted = [...scene.placements].sort((a, b) => a.clipart - b.clipart);
    for (const placement of sorted) {
        const spec = glyphSpec(placement, names, width, height);
        const mirror = spec.mirrored ? " scale(-1,1)" : "";
        parts.push(`<g transform="translate(${spec.x.toFixed(1)},${spec.y.toFixed(1)})">` +
            `<text class="glyph" transform="scale(${spec.scale})${mirror}" ` +
            `font-size="${BASE_FONT}" text-anchor="middle">${spec.glyph}</text>` +
            `<text class="glyph-label" y="${(BASE_FONT * spec.scale * 0.6).toFixed(1)}" ` +
            `text-anchor="middle">${spec.label}</text></g>`);
    }
    return (`<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">` +
        `<rect width="${width}" height="${height}" class="canvas-bg"/>` +
        parts.join("") +
        `</svg>`);
}
/** Probability bars for the inspector; percentages always total 100. */
export function sizeBars(dist) {
    const labels = ["small", "medium", "large"];
    if (!dist || dist.length !== 3) {
        return labels.map((label) => ({ label, pct: 100 / 3 }));
    }
    const total = dist.reduce((a, b) => a + b, 0);
    return labels.map((label, i) => ({ label, pct: (100 * dist[i]) / total }));
}
export function inspectorRows(inspector, marked) {
    const markedSet = new Set(marked);
    return inspector.map((c) => ({
        name: c.name,
        hSize: c.h_size.toFixed(2),
        bars: sizeBars(c.size_dist),
        marked: markedSet.has(c.clipart),
    }));
}
