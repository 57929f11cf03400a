/**
 * splitmix64 — the toolkit-wide deterministic PRNG.
 *
 * Must reproduce the committed golden sequences bit-exactly (see
 * ../tests/golden/splitmix64.json in the repository root): state advances
 * by the golden gamma, then a two-multiply scramble. Implemented on BigInt
 * and masked to 64 bits.
 */

const MASK = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: bigint | number) {
    this.state = BigInt(seed) & MASK;
  }

  next(): bigint {
    this.state = (this.state + GAMMA) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return (z ^ (z >> 31n)) & MASK;
  }

  /** Uniform double in [0, 1): top 53 bits of next(), scaled by 2^-53. */
  nextUnitDouble(): number {
    return Number(this.next() >> 11n) * 2 ** -53;
  }
}

/** Stable 64-bit seed from a string (FNV-1a), for naming seeded components. */
export function seedFromName(name: string): bigint {
  let hash = 0xcbf29ce484222325n;
  for (const ch of name) {
    hash ^= BigInt(ch.codePointAt(0)!);
    hash = (hash * 0x100000001b3n) & MASK;
  }
  return hash;
}
