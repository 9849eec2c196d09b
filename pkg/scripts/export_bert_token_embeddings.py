#!/usr/bin/env python3
"""One-time export of a transformer's input token embeddings.

Dumps the model's input embedding matrix (the static, pre-attention
vectors) together with its wordpiece vocabulary in the text table format
this toolkit reads, so the neighbour-reproduction tests in
tests/test_acceptance.py can run offline afterwards:

    python scripts/export_bert_token_embeddings.py \\
        --out data/bert-base-uncased-input-embeddings.vec

Requires the `transformers` package (with torch) and, on first use,
network access to fetch the checkpoint. The toolkit itself never needs
either; this script is the only place they appear.
"""

import argparse
import sys
from pathlib import Path


def main():
    parser = argparse.ArgumentParser(
        description="export input token embeddings to the text table format"
    )
    parser.add_argument("--model", default="bert-base-uncased")
    parser.add_argument(
        "--out",
        default="data/bert-base-uncased-input-embeddings.vec",
        help="output path (text embedding format)",
    )
    args = parser.parse_args()

    try:
        from transformers import AutoModel, AutoTokenizer
    except ImportError as exc:
        sys.exit(f"this script needs transformers and torch installed: {exc}")

    from embgeom.embed_store import EmbeddingTable, save_embeddings_text

    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModel.from_pretrained(args.model)
    weights = model.get_input_embeddings().weight.detach().cpu().numpy()
    tokens = [t for t, _ in sorted(tokenizer.get_vocab().items(), key=lambda kv: kv[1])]
    if len(tokens) != weights.shape[0]:
        sys.exit(
            f"vocab size {len(tokens)} does not match embedding rows "
            f"{weights.shape[0]}"
        )

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table = EmbeddingTable(tokens, weights)
    with open(out, "wb") as fh:
        fh.write(save_embeddings_text(table))
    print(f"wrote {weights.shape[0]} tokens x {weights.shape[1]} dims to {out}")


if __name__ == "__main__":
    main()
