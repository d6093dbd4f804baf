"""Reference scores for one mini_dataset pair, written to data/score_golden.json.

Uses the checked-in tiny models through transformers. Masked passes group
regular positions by residue mod 8 inside a single window; states are rounded
to half precision before alignment as they are when stored. Not run by ctest.
"""
import itertools
import json
import os

import numpy as np
import torch
from transformers import BertModel, BertTokenizer

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")
GAP = 8
LAYER = 4


def masked_states(model, ids, mask_id):
    n = len(ids)
    regular = list(range(1, n - 1))
    passes = [[p for p in regular if (p - 1) % GAP == r] for r in range(min(GAP, len(regular)))]
    out = None
    for ps in passes:
        masked = list(ids)
        for p in ps:
            masked[p] = mask_id
        with torch.no_grad():
            hs = model(input_ids=torch.tensor([masked]), output_hidden_states=True).hidden_states
        hs = np.stack([h[0].numpy().astype(np.float64) for h in hs])
        if out is None:
            out = np.zeros_like(hs)
        for p in ps:
            out[:, p] = hs[:, p]
        out[:, 0] += hs[:, 0] / len(passes)
        out[:, n - 1] += hs[:, n - 1] / len(passes)
    return out.astype(np.float16).astype(np.float64)


def tau_c(x, y):
    nc = nd = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        s = np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])
        nc += s > 0
        nd += s < 0
    m = min(len(set(x)), len(set(y)))
    n = len(x)
    return 2 * m * (nc - nd) / (n * n * (m - 1))


def tau_local(x, y, d):
    nc = nd = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        if abs(x[i] - x[j]) > d:
            continue
        if (x[i] - x[j]) * (y[i] - y[j]) > 0:
            nc += 1
        else:
            nd += 1
    return (nc - nd) / (nc + nd)


def main():
    rec = [json.loads(l) for l in open(os.path.join(DATA, "mini_dataset.jsonl"), encoding="utf-8")][1]
    tok = BertTokenizer(os.path.join(DATA, "tiny_sim", "vocab.txt"), do_lower_case=True)
    sim = BertModel.from_pretrained(os.path.join(DATA, "tiny_sim"), attn_implementation="eager").eval()
    raw = BertModel.from_pretrained(os.path.join(DATA, "tiny_raw")).float()
    table = raw.embeddings.word_embeddings.weight.detach().numpy().astype(np.float64)
    mask_id = tok.convert_tokens_to_ids("[MASK]")

    t_ids = tok(rec["text"])["input_ids"]
    s_ids = tok(rec["summary"])["input_ids"]
    T = masked_states(sim, t_ids, mask_id)[LAYER][1:-1]
    S = masked_states(sim, s_ids, mask_id)[LAYER][1:-1]
    t_reg, s_reg = t_ids[1:-1], s_ids[1:-1]
    beta = [int(np.argmax(S[i] @ T.T)) for i in range(len(s_reg))]

    alarms = sum(1 for i, w in enumerate(s_reg) if w in t_reg and t_reg[beta[i]] != w)
    soft = 0.0
    for i, w in enumerate(s_reg):
        u, v = table[w], table[t_reg[beta[i]]]
        soft += u @ v / np.linalg.norm(u) / np.linalg.norm(v)
    soft /= len(s_reg)
    pos = list(range(1, len(s_reg) + 1))
    out = {"doc_id": rec["doc_id"], "system_id": rec["system_id"], "beta": beta,
           "estime_alarms": alarms, "estime_soft": soft,
           "order_coherence": tau_c(pos, beta), "local_order_3": tau_local(pos, beta, 3)}
    with open(os.path.join(DATA, "score_golden.json"), "w") as f:
        json.dump(out, f, indent=1)
    print(out)


if __name__ == "__main__":
    main()
