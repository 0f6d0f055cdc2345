"""Regenerate the tiny GPT-2 checkpoint fixture and its reference outputs.

Builds a randomly initialised GPT-2 with the transformers reference
implementation, stores it in the published hub layout (safetensors, Conv1D
(in, out) weights, no "transformer." prefix) and records final-position
logits, per-layer final-position residuals and attention rows.

    python3 scripts/gen_tiny_gpt2.py
"""

import json
from pathlib import Path

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures" / "tiny_gpt2"
OUT.mkdir(parents=True, exist_ok=True)

torch.manual_seed(7)
cfg = GPT2Config(
    vocab_size=300,
    n_positions=32,
    n_embd=32,
    n_layer=2,
    n_head=4,
    initializer_range=0.2,
    activation_function="gelu_new",
    attn_implementation="eager",
)
model = GPT2LMHeadModel(cfg).eval()
with torch.no_grad():
    for name, p in model.named_parameters():
        if "ln" in name and name.endswith("weight"):
            p.copy_(1.0 + 0.2 * torch.randn_like(p))
        elif name.endswith("bias"):
            p.copy_(0.1 * torch.randn_like(p))

state = {k.removeprefix("transformer."): v.contiguous() for k, v in model.state_dict().items()}
state.pop("lm_head.weight", None)
save_file(state, str(OUT / "model.safetensors"), metadata={"format": "pt"})
(OUT / "config.json").write_text(
    json.dumps(
        {
            "model_type": "gpt2",
            "vocab_size": cfg.vocab_size,
            "n_positions": cfg.n_positions,
            "n_embd": cfg.n_embd,
            "n_layer": cfg.n_layer,
            "n_head": cfg.n_head,
            "layer_norm_epsilon": cfg.layer_norm_epsilon,
        },
        indent=1,
    )
)

cases = []
for tokens in ([5, 17, 250, 3, 99, 42, 42, 7, 123, 0, 299, 64, 8, 8, 31, 200], [1], [10, 20, 30]):
    ids = torch.tensor([tokens])
    with torch.no_grad():
        out = model(ids, output_hidden_states=True, output_attentions=True)
    hidden = out.hidden_states
    cases.append(
        {
            "tokens": tokens,
            "logits": out.logits[0, -1].tolist(),
            # hidden_states[0] is the embedding sum, [1..L-1] are block outputs;
            # the last entry already has the final layer norm applied.
            "residual_final_pos": [h[0, -1].tolist() for h in hidden[:-1]],
            "attention_last_row": [[a[0, h, -1].tolist() for h in range(cfg.n_head)] for a in out.attentions],
        }
    )
(OUT / "expected.json").write_text(json.dumps({"cases": cases}))
print(sorted(state))
