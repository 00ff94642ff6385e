/**
 * Shortest round-trip decimal representation of single-precision values.
 *
 * A serialized component must parse (via double precision) back to the
 * exact same float32. The shortest such string is found by increasing
 * precision until the fround round-trip is the identity; the output is
 * normalized (no trailing mantissa zeros, lowercase exponent).
 */

export function formatFloat32(x: number): string {
  const v = Math.fround(x);
  if (!Number.isFinite(v)) {
    throw new Error(`non-finite float: ${x}`);
  }
  if (Number.isInteger(v) && Math.abs(v) < 1e21) {
    return v.toString();
  }
  for (let p = 1; p <= 17; p++) {
    const s = v.toPrecision(p);
    if (Math.fround(Number(s)) === v) {
      return normalize(s);
    }
  }
  return v.toString();
}

function normalize(s: string): string {
  let mantissa = s;
  let exponent = "";
  const e = s.indexOf("e");
  if (e >= 0) {
    mantissa = s.slice(0, e);
    exponent = s.slice(e);
  }
  if (mantissa.includes(".")) {
    mantissa = mantissa.replace(/0+$/, "").replace(/\.$/, "");
  }
  return mantissa + exponent;
}

/** Bit pattern of the float32 value, as 8 lowercase hex digits. */
export function float32Bits(x: number): string {
  const buf = new DataView(new ArrayBuffer(4));
  buf.setFloat32(0, x, false);
  return buf.getUint32(0, false).toString(16).padStart(8, "0");
}
