"""Reference activations from the Hugging Face PyTorch GPT-2 implementation.

usage: reference_forward.py ARCHIVE OUT_JSON [CASES] [SEED]

Loads a GPT-2 layout safetensors archive (config taken from its metadata),
runs CASES seeded random token sequences in float64 and writes their ids,
logits and the hidden states that the Hugging Face model exposes.
"""

import json
import sys

import numpy as np
import torch
from safetensors import safe_open
from transformers import GPT2Config, GPT2LMHeadModel


def main() -> None:
    archive, out_path = sys.argv[1], sys.argv[2]
    cases = int(sys.argv[3]) if len(sys.argv) > 3 else 20
    seed = int(sys.argv[4]) if len(sys.argv) > 4 else 0

    with safe_open(archive, framework="pt") as f:
        meta = f.metadata()
        state = {f"transformer.{k}": f.get_tensor(k).double() for k in f.keys()}
    n_layer, n_head = int(meta["n_layer"]), int(meta["n_head"])
    d_model, vocab = int(meta["d_model"]), int(meta["vocab_size"])
    n_ctx, eps = int(meta["n_ctx"]), float(meta["layernorm_epsilon"])
    config = GPT2Config(
        n_layer=n_layer,
        n_head=n_head,
        n_embd=d_model,
        vocab_size=vocab,
        n_positions=n_ctx,
        layer_norm_epsilon=eps,
        activation_function="gelu_new",
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
        tie_word_embeddings=True,
        bos_token_id=0,
        eos_token_id=0,
    )
    model = GPT2LMHeadModel(config).double().eval()
    state["lm_head.weight"] = state["transformer.wte.weight"]
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [m for m in missing if not m.endswith(".attn.bias") and not m.endswith(".attn.masked_bias")]
    if missing or unexpected:
        raise SystemExit(f"state mismatch: missing={missing} unexpected={unexpected}")

    rng = np.random.default_rng(seed)
    out_cases = []
    for _ in range(cases):
        n = int(rng.integers(1, n_ctx + 1))
        ids = [int(x) for x in rng.integers(0, vocab, size=n)]
        with torch.no_grad():
            res = model(torch.tensor([ids]), output_hidden_states=True)
        hs = [h[0].tolist() for h in res.hidden_states]
        # hidden_states[i] feeds block i; the last entry has the final layernorm applied.
        hidden = {"embed": hs[0], "ln_f": hs[n_layer]}
        for i in range(n_layer - 1):
            hidden[f"block.{i}"] = hs[i + 1]
        out_cases.append({"ids": ids, "logits": res.logits[0].tolist(), "hidden": hidden})

    with open(out_path, "w", encoding="utf-8") as out:
        json.dump({"config": meta, "cases": out_cases}, out)
    print(f"{cases} cases", file=sys.stderr)


if __name__ == "__main__":
    main()
