// Wire protocol frames exchanged with the live service (JSON text frames).
export function parseServerFrame(raw) {
    let doc;
    try {
        doc = JSON.parse(raw);
    }
    catch {
        return null;
    }
    if (typeof doc !== "object" || doc === null)
        return null;
    const type = doc.type;
    if (type === "telemetry" ||
        type === "trajectory" ||
        type === "track" ||
        type === "error" ||
        type === "ack") {
        return doc;
    }
    return null;
}
