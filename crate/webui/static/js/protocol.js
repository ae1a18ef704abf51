// Envelope wire format shared with the server. See docs/protocol.md.
export const PROTOCOL_VERSION = 1;
export function envelope(type, topic, seq, t, payload) {
    return { v: PROTOCOL_VERSION, type, topic, seq, t, payload };
}
export function commandEnvelope(seq, t, payload) {
    return envelope("command", "/operator_cmds", seq, t, payload);
}
export function leaseEnvelope(seq, t, action) {
    return envelope("lease", "/lease", seq, t, { action });
}
/** Parse an inbound frame; null for anything that is not a v1 envelope. */
export function parseEnvelope(text) {
    let value;
    try {
        value = JSON.parse(text);
    }
    catch {
        return null;
    }
    if (typeof value !== "object" || value === null)
        return null;
    const env = value;
    if (env.v !== PROTOCOL_VERSION || typeof env.type !== "string" || typeof env.seq !== "number")
        return null;
    return env;
}
