import json

import pytest

from corpora import random_corpus
from lmsmooth.cli import main, parse_range
from lmsmooth.textprep import read_sentences, write_sentences


@pytest.fixture
def corpus_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_sentences("tok.txt", random_corpus(0, 25, 4000))
    assert main(["split", "tok.txt", "--blocks", "9", "-o", "blocks"]) == 0
    return tmp_path


def test_tokenize(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "raw.txt").write_text("1. He said 10 .\n\n2. Mr. Speaker , what ?\n")
    assert main(["tokenize", "raw.txt", "-o", "out.txt", "--strip-numbering"]) == 0
    assert (tmp_path / "out.txt").read_text() == \
        "<s> He said # . </s>\n<s> Mr. Speaker , what ? </s>\n"
    manifest = json.loads((tmp_path / "out.txt.manifest.json").read_text())
    assert set(manifest["inputs"]) == {"raw.txt"} and set(manifest["outputs"]) == {"out.txt"}


def test_split_18(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    write_sentences("s.txt", [("<s>", f"w{t}", "</s>") for t in range(18)])
    assert main(["split", "s.txt", "--blocks", "9", "-o", "b"]) == 0
    for k in range(9):
        assert len(read_sentences(tmp_path / "b" / f"block.{k}.txt")) == 2


def test_compare_two_columns(corpus_dir):
    rc = main(["compare", "--blocks-dir", "blocks", "--train", "0-5", "--test", "sample2",
               "--models", "de:15,dirichlet", "-o", "r.tsv", "--quiet"])
    assert rc == 0
    lines = (corpus_dir / "r.tsv").read_text().splitlines()
    assert lines[0] == "sample\tmodel\tN\tlog2prob\tperplexity"
    assert [line.split("\t")[1] for line in lines[1:]] == ["de:15", "dirichlet"]


def test_stagewise_pipeline(corpus_dir):
    blocks = [f"blocks/block.{k}.txt" for k in range(9)]
    assert main(["testprep", "--train", *blocks[:6], "--test", *blocks[6:], "-o", "samples"]) == 0
    assert main(["count", *blocks[:6], "-o", "train", "--freqs"]) == 0
    assert main(["train", "de", "--blocks", *blocks[:6], "-o", "de.model"]) == 0
    assert main(["train", "dirichlet", "--counts", "train", "-o", "dir.model"]) == 0
    assert main(["baseline", "--counts", "train", "-o", "base"]) == 0
    for model in ("de.model", "dir.model", "base.addk"):
        assert main(["eval", "--counts", "train", "--model", model,
                     "--test", "samples/sample2.txt", "-o", f"{model}.tsv"]) == 0
    # stagewise DE eval agrees with the in-process comparison
    assert main(["compare", "--blocks-dir", "blocks", "--test", "sample2", "--models", "de:15",
                 "-o", "cmp.tsv", "--quiet"]) == 0
    a = (corpus_dir / "de.model.tsv").read_text().splitlines()[1].split("\t")
    b = (corpus_dir / "cmp.tsv").read_text().splitlines()[1].split("\t")
    assert a[2:] == b[2:]


def test_merge_equals_combined_count(corpus_dir):
    blocks = [f"blocks/block.{k}.txt" for k in range(3)]
    assert main(["count", *blocks]) == 0
    assert main(["merge", *blocks, "-o", "m"]) == 0
    assert main(["count", *blocks, "-o", "c"]) == 0
    for ext in (".tok.counts", ".bigr.counts"):
        assert (corpus_dir / f"m{ext}").read_bytes() == (corpus_dir / f"c{ext}").read_bytes()


def test_exit_codes(corpus_dir, capsys):
    assert main(["eval", "--counts", "missing", "--model", "x", "--test", "y"]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "missing file" in err[0]
    (corpus_dir / "bad.txt").write_text("<s> a\n")
    assert main(["count", "bad.txt"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1
    assert main(["compare", "--blocks-dir", "blocks", "--train", "0-5", "--test-blocks", "5-8"]) == 1
    rc = main(["train", "de", "--blocks", "blocks/block.0.txt", "blocks/block.1.txt",
               "--max-iter", "1", "-o", "x.model"])
    assert rc == 3 and (corpus_dir / "x.model").exists()


def test_oov_exit(corpus_dir):
    blocks = [f"blocks/block.{k}.txt" for k in range(6)]
    assert main(["count", *blocks, "-o", "train"]) == 0
    assert main(["baseline", "--counts", "train", "-o", "base"]) == 0
    (corpus_dir / "oov.txt").write_text("<s> zebra </s>\n")
    assert main(["eval", "--counts", "train", "--model", "base.addk", "--test", "oov.txt"]) == 2


def test_parse_range():
    assert parse_range("0-5") == [0, 1, 2, 3, 4, 5]
    assert parse_range("1,3-4") == [1, 3, 4]
