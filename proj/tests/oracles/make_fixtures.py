#!/usr/bin/env python3
"""Regenerates the frozen fixtures under tests/data.

Independent oracles for the C++ code paths:
  * tokenizer_golden.json  - ids/pieces from the `transformers` BertTokenizer
                             loaded with the bert-base-uncased vocab.
  * tiny_sim/, tiny_raw/   - random-weight BERT models saved by `transformers`
                             (safetensors, F32 and F16 respectively).
  * forward_golden.json    - all hidden states of tiny_sim for a masked input.
  * masked_golden.json     - one-at-a-time masked extraction of fixture_a.
  * raw_golden.json        - raw-table cosines from a direct weight dump.

Run from the repository root:  python3 tests/oracles/make_fixtures.py
Requires torch, transformers, safetensors. Never run by ctest.
"""
import json
import os

import numpy as np
import torch
from transformers import BertConfig, BertModel, BertTokenizer

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
FULL_VOCAB = os.path.join(DATA, "vocab_uncased.txt")


def read(path):
    with open(os.path.join(DATA, path), encoding="utf-8") as f:
        return f.read()


def golden_tokenizer(tok):
    cases = {
        "hello": "hello",
        "article_600": read("docs/article_600.txt"),
        "accents": "Café naïve Zürich São Paulo ÅNGSTRÖM résumé",
        "punct": "Hello, world!! (a-b) [x]{y} \"quoted\" it's 3.14% $5 #tag @user",
        "unicode_quotes": "“Smart quotes” and ‘single’ — dash…",
        "cjk": "token中文mixed 日本",
        "whitespace": "  tabs\tand\nnewlines\r\n  and nbsp  ",
        "control": "bell\u0007char and zero​width",
        "long_word": "a" * 120 + " end",
        "unknown_piece": "☃ snowman \U0001F600 emoji",
        "numbers": "1,234,567 and 0.001 and 2021-03-04",
        "mixed_case": "ThE QuIcK BrOwN FoX JUMPS",
    }
    out = {}
    for name, text in cases.items():
        enc = tok(text, add_special_tokens=True)
        ids = enc["input_ids"]
        out[name] = {
            "text": text,
            "ids": ids,
            "tokens": tok.convert_ids_to_tokens(ids),
        }
    return out


def build_tiny_vocab(full_tok, texts):
    full = [l.rstrip("\n") for l in open(FULL_VOCAB, encoding="utf-8")]
    wanted = set()
    for t in texts:
        wanted.update(full_tok.tokenize(t))
    for c in "abcdefghijklmnopqrstuvwxyz0123456789":
        wanted.add(c)
        wanted.add("##" + c)
    for c in "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~":
        wanted.add(c)
    wanted -= {"[UNK]"}
    body = [w for w in full if w in wanted]
    return ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + body


def perturb(model, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "LayerNorm.weight" in name:
                p.copy_(1.0 + 0.1 * torch.randn(p.shape, generator=g))
            elif name.endswith("bias"):
                p.copy_(0.05 * torch.randn(p.shape, generator=g))
            else:
                p.copy_(0.15 * torch.randn(p.shape, generator=g))


def make_model(vocab, hidden, layers, heads, inter, seed, path, half):
    torch.manual_seed(seed)
    cfg = BertConfig(vocab_size=len(vocab), hidden_size=hidden,
                     num_hidden_layers=layers, num_attention_heads=heads,
                     intermediate_size=inter, max_position_embeddings=512,
                     hidden_act="gelu", layer_norm_eps=1e-12,
                     attn_implementation="eager")
    model = BertModel(cfg, add_pooling_layer=False)
    perturb(model, seed)
    model.eval()
    os.makedirs(path, exist_ok=True)
    if half:
        model.half().save_pretrained(path, safe_serialization=True)
        model.float()
    else:
        model.save_pretrained(path, safe_serialization=True)
    with open(os.path.join(path, "vocab.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(vocab) + "\n")
    return model


def hidden_states(model, ids):
    with torch.no_grad():
        out = model(input_ids=torch.tensor([ids]),
                    attention_mask=torch.ones(1, len(ids), dtype=torch.long),
                    token_type_ids=torch.zeros(1, len(ids), dtype=torch.long),
                    output_hidden_states=True)
    return [h[0].numpy().astype(np.float64) for h in out.hidden_states]


def main():
    full_tok = BertTokenizer(FULL_VOCAB, do_lower_case=True)
    with open(os.path.join(DATA, "tokenizer_golden.json"), "w", encoding="utf-8") as f:
        json.dump(golden_tokenizer(full_tok), f, ensure_ascii=False, indent=1)

    texts = [read("docs/" + n) for n in sorted(os.listdir(os.path.join(DATA, "docs")))]
    for line in open(os.path.join(DATA, "mini_dataset.jsonl"), encoding="utf-8"):
        rec = json.loads(line)
        texts += [rec["text"], rec["summary"]]
    texts.append("hello cat dog")
    vocab = build_tiny_vocab(full_tok, texts)

    sim = make_model(vocab, 32, 4, 4, 64, 1234, os.path.join(DATA, "tiny_sim"), False)
    raw = make_model(vocab, 24, 2, 2, 48, 4321, os.path.join(DATA, "tiny_raw"), True)
    # the F16 file is the contract; compare against the rounded weights
    raw = BertModel.from_pretrained(os.path.join(DATA, "tiny_raw"),
                                    attn_implementation="eager").float().eval()

    tok = BertTokenizer(os.path.join(DATA, "tiny_sim", "vocab.txt"), do_lower_case=True)
    mask_id = tok.convert_tokens_to_ids("[MASK]")

    # forward pass over a masked input
    probe = read("docs/probe_two_sentences.txt").strip()
    ids = tok(probe)["input_ids"]
    masked = list(ids)
    for p in (2, 9):
        masked[p] = mask_id
    hs = hidden_states(sim, masked)
    with open(os.path.join(DATA, "forward_golden.json"), "w") as f:
        json.dump({"text": probe, "ids": ids, "input_ids": masked,
                   "hidden": [h.tolist() for h in hs]}, f)

    # one-at-a-time masked extraction; CLS/SEP averaged over all passes
    text = read("docs/fixture_a.txt").strip()
    ids = tok(text)["input_ids"]
    n = len(ids)
    layers = len(hs)
    out = np.zeros((layers, n, 32))
    for p in range(1, n - 1):
        masked = list(ids)
        masked[p] = mask_id
        h = hidden_states(sim, masked)
        for k in range(layers):
            out[k, p] = h[k][p]
            out[k, 0] += h[k][0] / (n - 2)
            out[k, n - 1] += h[k][n - 1] / (n - 2)
    with open(os.path.join(DATA, "masked_golden.json"), "w") as f:
        json.dump({"text": text, "ids": ids, "embeddings": out.tolist()}, f)

    table = raw.embeddings.word_embeddings.weight.detach().numpy().astype(np.float64)
    vid = {w: i for i, w in enumerate(vocab)}

    def cos(a, b):
        u, v = table[vid[a]], table[vid[b]]
        return float(u @ v / np.linalg.norm(u) / np.linalg.norm(v))

    with open(os.path.join(DATA, "raw_golden.json"), "w") as f:
        json.dump({"cat_dog": cos("cat", "dog"), "cat_cat": cos("cat", "cat"),
                   "hello_row": table[vid["hello"]].tolist()}, f)
    print("vocab", len(vocab), "tokens in article",
          len(full_tok.tokenize(read("docs/article_600.txt"))))


if __name__ == "__main__":
    main()
