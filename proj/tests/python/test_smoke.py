import math
import random

import pytest

import geoloc

CENTRES = [(40.7128, -74.0060), (34.0522, -118.2437), (41.8781, -87.6298), (29.7604, -95.3698)]


def make_corpus(seed=3, users=60):
    rng = random.Random(seed)
    train, dev, test = [], [], []
    for r, (lat, lon) in enumerate(CENTRES):
        for u in range(users):
            words = " ".join(f"reg{'abcd'[r]}w{rng.randrange(30)}" for _ in range(15))
            record = (f"u{r}_{u}", lat + rng.uniform(-0.3, 0.3), lon + rng.uniform(-0.3, 0.3), "the " + words)
            (train if u % 5 < 3 else dev if u % 5 == 3 else test).append(record)
    return train, dev, test


CONFIG = {"k": "4", "min_df": "2", "hidden_size": "16", "batch_size": "20", "max_epochs": "15",
          "patience": "4", "learn_rate": "0.01"}


@pytest.fixture(scope="module")
def trained():
    train, dev, test = make_corpus()
    return geoloc.train(train, dev, CONFIG), test


def test_haversine_and_tokenize():
    assert geoloc.haversine_km((0, 0), (0, 180)) == pytest.approx(20015.0868, abs=1e-3)
    assert geoloc.tokenize("Hello @Bob, it's #NYC!") == ["hello", "@bob", "it's", "#nyc"]


def test_evaluate_report():
    report = geoloc.evaluate([(0, 0), (10, 10)], [(0, 1), (12, 10)])
    assert report["n_users"] == 2
    assert report["acc_at_161"] == 50.0
    assert report["median_km"] == pytest.approx(166.79238996683811, rel=1e-12)


def test_discretisers():
    line = [(0.0, float(x)) for x in range(1, 9)]
    kd = geoloc.fit_kdtree(line, 4)
    assert kd.num_classes == 4
    assert kd.assignments == [0, 0, 1, 1, 2, 2, 3, 3]
    km = geoloc.fit_kmeans([(0, 0), (1, 0), (0, 2), (5, 5), (6, 5), (5, 7)], 2, seed=42)
    assert km.inertia_history[-1] == pytest.approx(20 / 3, rel=1e-12)
    assert km.representative(km.assign(0, 0)) == (0.0, 0.0)


def test_train_predict_and_persist(trained, tmp_path):
    model, test = trained
    report = model.evaluate(test)
    assert report["acc_at_161"] >= 90.0
    path = tmp_path / "m.bin"
    model.save(path)
    loaded = geoloc.load_model(path)
    assert loaded.to_bytes() == model.to_bytes()
    assert loaded.predict(test) == model.predict(test)


def test_training_is_deterministic(trained):
    model, _ = trained
    train, dev, _ = make_corpus()
    assert geoloc.train(train, dev, CONFIG).to_bytes() == model.to_bytes()


def test_nearest_terms(trained):
    model, _ = trained
    word = model.vocabulary.terms[0]
    self_hit = model.nearest([word], n=1, include_query=True)
    assert self_hit[0][0] == word
    assert self_hit[0][1] == pytest.approx(1.0)
    assert all(term != word for term, _ in model.nearest([word], n=5))
    assert len(model.embed([word])) == 16


def test_errors_carry_codes(tmp_path):
    with pytest.raises(geoloc.GeolocError, match=r"^E_IO: "):
        geoloc.load_model(tmp_path / "missing.bin")
    with pytest.raises(geoloc.GeolocError, match=r"^E_CONFIG: "):
        geoloc.train([], [], {"no_such_key": "1"})
    with pytest.raises(geoloc.GeolocError, match=r"^E_DATA: "):
        geoloc.fit_kdtree([(0, 0)], 2)
    assert math.isfinite(geoloc.haversine_km((1, 2), (3, 4)))
