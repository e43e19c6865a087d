"""Independent reference implementations used as test oracles.

Everything here is written as plain nested loops and simple list
bookkeeping, deliberately structured differently from the package code
it checks. Keep it free of imports from moesim.linalg / moesim.cache.
"""

import math


# --- naive vector math -----------------------------------------------------

def naive_matvec(matrix, x):
    out = []
    for row in matrix:
        total = 0.0
        for j in range(len(x)):
            total += row[j] * x[j]
        out.append(total)
    return out


def naive_matvec_t(matrix, x):
    ncols = len(matrix[0])
    out = []
    for j in range(ncols):
        total = 0.0
        for i in range(len(x)):
            total += matrix[i][j] * x[i]
        out.append(total)
    return out


def naive_softmax(logits):
    m = max(logits)
    exps = []
    for v in logits:
        exps.append(math.exp(v - m))
    total = 0.0
    for e in exps:
        total += e
    return [e / total for e in exps]


def naive_expert(x, w1, w2):
    hidden = naive_matvec(w1, x)
    for i in range(len(hidden)):
        if hidden[i] < 0.0:
            hidden[i] = 0.0
    return naive_matvec(w2, hidden)


def topk_by_prob(probs, k):
    """Brute force: sort every softmax value, descending, id-ascending ties."""
    order = sorted(range(len(probs)), key=lambda j: (-probs[j], j))
    return order[:k]


def naive_gate(x, gate_weights, k):
    """Published selection rule: descending logit, ties by ascending id.

    Softmax is monotone, so this is top-k by probability; the logit key
    also pins the order when near-equal logits round to equal
    probabilities (exp collapses sub-ulp differences to 1.0).
    """
    logits = naive_matvec_t(gate_weights, x)
    probs = naive_softmax(logits)
    ids = sorted(range(len(logits)), key=lambda j: (-logits[j], j))[:k]
    return tuple(ids), tuple(probs[j] for j in ids)


def serial_reference(x, params, supplied=None):
    """All-gates-then-all-experts serial decoder, naive math throughout.

    Returns (output, [(ids, weights), ...]) with one consumed decision
    per block.
    """
    cfg = params.config
    level = cfg.activation_level
    pending = {}
    consumed = []
    for b in range(cfg.num_blocks):
        block = params.blocks[b]
        # Stage 1: every gate this block carries, before any expert math.
        if supplied is not None:
            ids, weights = supplied[b]
        elif cfg.has_conv_gate(b):
            ids, weights = naive_gate(x, block.gate, cfg.top_k)
        else:
            ids, weights = pending.pop(b)
        if cfg.has_pre_gate(b) and supplied is None:
            pending[b + level] = naive_gate(x, block.pre_gate, cfg.top_k)
        # Stage 2: experts, then the block's dense layer.
        mix = [0.0] * cfg.d_model
        for w, e in zip(weights, ids):
            expert = block.expert(e)
            out = naive_expert(x, expert.w1, expert.w2)
            for i in range(cfg.d_model):
                mix[i] += w * out[i]
        x = naive_matvec(block.non_moe, mix)
        consumed.append((tuple(ids), tuple(weights)))
    return x, consumed


# --- cache replay ----------------------------------------------------------

def replay_cache(policy, capacity_bytes, accesses):
    """Single-pass replay oracle.

    accesses: iterable of (key, nbytes). Returns a list of
    (hit, evicted_tuple) in access order.
    """
    sizes = {}
    freq = {}
    insertion = []   # oldest-first insertion order
    recency = []     # least-recent-first
    used = 0
    results = []
    for key, nbytes in accesses:
        if key in sizes:
            freq[key] += 1
            recency.remove(key)
            recency.append(key)
            results.append((True, ()))
            continue
        if nbytes > capacity_bytes:
            results.append((False, ()))
            continue
        evicted = []
        while used + nbytes > capacity_bytes:
            if policy == "lifo":
                victim = insertion[-1]
            elif policy == "lfu":
                best = None
                for cand in insertion:  # insertion order breaks freq ties
                    if best is None or freq[cand] < freq[best]:
                        best = cand
                victim = best
            else:  # lru
                victim = recency[0]
            insertion.remove(victim)
            recency.remove(victim)
            used -= sizes.pop(victim)
            del freq[victim]
            evicted.append(victim)
        sizes[key] = nbytes
        freq[key] = 1
        insertion.append(key)
        recency.append(key)
        used += nbytes
        results.append((False, tuple(evicted)))
    return results
