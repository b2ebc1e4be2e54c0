import random

import pytest

from hiercat import CatalogEngine, Document, EngineConfig, Path


@pytest.fixture
def engine():
    eng = CatalogEngine(EngineConfig(workers_validate=1, workers_write=1))
    yield eng
    eng.close()


def make_engine(scheme="ospl", data_dir=None, **kw):
    return CatalogEngine(
        EngineConfig(
            data_dir=data_dir,
            cc_scheme=scheme,
            workers_validate=kw.pop("workers_validate", 1),
            workers_write=kw.pop("workers_write", 1),
            **kw,
        )
    )


def commit(engine, writes):
    txn = engine.start_transaction()
    return engine.commit(txn, writes)


def build_retail_tree(engine):
    """Small fixture catalog: a retail database with Sales and Customer
    tables, region/date partitions, and leaf files carrying statistics."""
    commit(engine, [
        {"path": "/retail", "type": "add", "value": {"obj_type": "database"}},
        {"path": "/retail/sales", "type": "add", "value": {"obj_type": "table"}},
        {"path": "/retail/customer", "type": "add", "value": {"obj_type": "table"}},
    ])
    writes = []
    for region in ("EU", "US"):
        writes.append({"path": f"/retail/sales/{region}", "type": "add",
                       "value": {"obj_type": "partition", "part_val": region}})
        for date in ("2024-12-31", "2025-01-02", "2025-02-01"):
            writes.append({"path": f"/retail/sales/{region}/{date}", "type": "add",
                           "value": {"obj_type": "partition", "part_val": date}})
            for i, price_min in enumerate((3, 7)):
                writes.append({
                    "path": f"/retail/sales/{region}/{date}/f{i}",
                    "type": "add", "leaf": True,
                    "value": {"obj_type": "file",
                              "stats": {"price": {"min": price_min}, "size": 100 + i}},
                })
    for i in range(4):
        writes.append({"path": f"/retail/customer/c{i}", "type": "add",
                       "value": {"obj_type": "partition"}})
        writes.append({"path": f"/retail/customer/c{i}/f0", "type": "add", "leaf": True,
                       "value": {"obj_type": "file", "stats": {"size": 10}}})
    return commit(engine, writes)


def random_document(rng: random.Random, depth: int = 2) -> Document:
    """Randomized document generator used by round-trip style tests."""

    def scalar():
        kind = rng.randrange(6)
        if kind == 0:
            return None
        if kind == 1:
            return rng.random() < 0.5
        if kind == 2:
            return rng.randint(-(2**63), 2**63 - 1)
        if kind == 3:
            return rng.uniform(-1e9, 1e9)
        if kind == 4:
            return "".join(rng.choice("abcdefg хеш") for _ in range(rng.randrange(8)))
        return bytes(rng.randrange(256) for _ in range(rng.randrange(8)))

    def value(level):
        roll = rng.random()
        if level > 0 and roll < 0.2:
            return make(level - 1)
        if level > 0 and roll < 0.35:
            return [scalar() for _ in range(rng.randrange(4))]
        return scalar()

    def make(level):
        names = rng.sample(["a", "b", "c", "d", "e", "f", "g", "h"], rng.randrange(1, 6))
        return Document({name: value(level) for name in names})

    return make(depth)
