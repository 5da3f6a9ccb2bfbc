import math

import pytest

ovcnet = pytest.importorskip("ovcnet")


def test_tokenize_and_vocabulary():
    assert ovcnet.tokenize("The Cat, sat!") == ["the", "cat", "sat"]
    vocab = ovcnet.Vocabulary.build(["the cat sat", "the dog"])
    assert vocab.tokens()[:4] == ["<pad>", "<bos>", "<eos>", "<unk>"]
    assert len(vocab) == 8
    ids = vocab.encode("the cat")
    assert ids[0] == 1 and ids[-1] == 2
    assert vocab.decode(ids) == ["the", "cat"]


def test_metrics():
    assert abs(ovcnet.bleu(["the cat"], [["the cat sat"]])[1] - math.exp(-0.5)) < 1e-9
    assert ovcnet.meteor_lite("a b", ["a b"]) == 0.9375
    assert abs(ovcnet.rouge_l("a c d", ["a b c d"]) - 0.8356) < 1e-4
    same = ["the red car goes up", "a blue dog jumps high"]
    assert abs(ovcnet.cider_d(same, [[s] for s in same]) - 10.0) < 1e-6
    report = ovcnet.score(same, [[s] for s in same])
    assert set(report) == {"b1", "b2", "b3", "b4", "meteor", "rouge_l", "cider_d"}
    with pytest.raises(ovcnet.ValidationError):
        ovcnet.cider_d(["a"], [["a"]])


def test_sample_frames():
    assert ovcnet.sample_frames(10, 1) == [0]
    idx = ovcnet.sample_frames(100, 40)
    assert idx[0] == 0 and idx[-1] == 99
    assert all(a <= b for a, b in zip(idx, idx[1:]))


def test_config_round_trip():
    cfg = ovcnet.TrainConfig()
    assert cfg.learning_rate == 1e-4
    assert cfg.t_s == 40
    assert getattr(cfg, "lambda") == 0.1
    cfg.epochs = 3
    cfg.use_de = False
    back = ovcnet.TrainConfig.parse(cfg.to_text())
    assert back == cfg
    with pytest.raises(ovcnet.ParseError):
        ovcnet.TrainConfig.parse("nonsense = 1\n")
    with pytest.raises(ovcnet.ValidationError):
        ovcnet.TrainConfig.parse("batch_size = 0\n")


def test_train_evaluate(tmp_path):
    data = tmp_path / "data"
    counts = ovcnet.synthesize('{"seed": 2, "train_objects": 8, "test_objects": 3}', data)
    assert counts["train_objects"] == 8
    cfg = ovcnet.TrainConfig.parse(
        "embed_dim = 8\nhidden_dim = 8\nattention_dim = 4\nfeature_dim = 8\nt_s = 3\nepochs = 2\n"
    )
    ck = ovcnet.train(cfg, data)
    assert ck.epoch == 2
    assert [h["epoch"] for h in ck.history] == [1, 2]
    path = tmp_path / "ck.ovck"
    ck.save(path)
    assert ovcnet.load_checkpoint(path).to_bytes() == ck.to_bytes()
    report = ovcnet.evaluate(ck, data, "test")
    assert report["objects"] == 3
    assert len(report["captions"]) == 3
    object_id = report["captions"][0][0]
    assert ovcnet.caption(ck, data, object_id) == report["captions"][0][1]
    with pytest.raises(ovcnet.IoError):
        ovcnet.load_checkpoint(tmp_path / "missing.ovck")
