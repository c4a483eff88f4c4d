#!/usr/bin/env python3
"""Regenerate the fixtures under fixtures/.

Source: the GeoNames cities1000 dump and countryInfo table as packaged by the
`geonamescache` PyPI package (v3.0.2). The dumps carry no feature codes, so
PPLC is reconstructed from countryInfo's capital column (most populous city of
that country whose name or alternate name equals the capital).

Outputs:
  fixtures/geonames/cities-100k-and-capitals.csv   every city >= 100k plus capitals
  fixtures/mini/gazetteer.csv                      48-country toy gazetteer
  fixtures/mini/embeddings/<model>.manifest.json + .jsonl
  fixtures/mini/responses/<model>.jsonl
  fixtures/mini/vocab/chatlike.json
"""

import json
import math
import os
import unicodedata

import geonamescache
import numpy as np

ROOT = os.path.join(os.path.dirname(__file__), "..", "fixtures")
DATA = os.path.join(os.path.dirname(geonamescache.__file__), "data")

HEADER = [
    "Geoname ID", "Name", "ASCII Name", "Alternate Names", "Feature Class",
    "Feature Code", "Country Code", "Country name EN", "Country Code 2",
    "Admin1 Code", "Admin2 Code", "Admin3 Code", "Admin4 Code", "Population",
    "Elevation", "DIgital Elevation Model", "Timezone", "Modification date",
    "LABEL EN", "Coordinates",
]


def ascii_fold(s):
    return unicodedata.normalize("NFKD", s).encode("ascii", "ignore").decode("ascii")


def load():
    cities = json.load(open(os.path.join(DATA, "cities1000.json")))
    countries = json.load(open(os.path.join(DATA, "countries.json")))
    return list(cities.values()), countries


def capitals(cities, countries):
    by_cc = {}
    for c in cities:
        by_cc.setdefault(c["countrycode"], []).append(c)
    caps = {}
    for iso, info in countries.items():
        cap = info.get("capital")
        if not cap:
            continue
        cands = [
            c for c in by_cc.get(iso, [])
            if c["name"] == cap or cap in c.get("alternatenames", [])
        ]
        if cands:
            best = max(cands, key=lambda c: (c["population"], -c["geonameid"]))
            caps[best["geonameid"]] = iso
    return caps


def row(c, countries, caps):
    cc = c["countrycode"]
    fcode = "PPLC" if c["geonameid"] in caps else "PPL"
    return [
        str(c["geonameid"]), c["name"], ascii_fold(c["name"]), "", "P", fcode, cc,
        countries.get(cc, {}).get("name", ""), "", c.get("admin1code", ""), "", "", "",
        str(c["population"]), "", "", c.get("timezone", ""), "2023-01-01",
        countries.get(cc, {}).get("name", ""),
        f'{c["latitude"]}, {c["longitude"]}',
    ]


def write_csv(path, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(";".join(HEADER) + "\n")
        for r in rows:
            f.write(";".join(x.replace(";", ",") for x in r) + "\n")


MINI_COUNTRIES = {
    "NorthAmerica": ["US", "CA", "MX", "CU", "GT", "PA", "JM", "HT"],
    "SouthAmerica": ["BR", "AR", "CO", "PE", "CL", "VE", "BO", "EC"],
    "Europe": ["FR", "DE", "GB", "ES", "IT", "PL", "UA", "RU"],
    "Africa": ["NG", "EG", "ZA", "KE", "ET", "BF", "CD", "MR"],
    "Asia": ["CN", "IN", "JP", "ID", "VN", "KH", "TR", "IR"],
    "Oceania": ["AU", "NZ", "PG", "FJ", "SB", "VU", "WS", "TO"],
}

CONTINENT_OF = {cc: k for k, v in MINI_COUNTRIES.items() for cc in v}

# Per-continent offset strength in the synthetic embeddings.
ISOLATION = {
    "NorthAmerica": 0.2, "SouthAmerica": 0.15, "Europe": 0.6,
    "Africa": 0.5, "Asia": 0.45, "Oceania": 0.05,
}


def unit_xyz(lat, lon):
    la, lo = math.radians(lat), math.radians(lon)
    return np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])


def mini(cities, countries, caps):
    by_cc = {}
    for c in cities:
        if c["countrycode"] in CONTINENT_OF:
            by_cc.setdefault(c["countrycode"], []).append(c)
    chosen = {}
    for cc, lst in by_cc.items():
        lst.sort(key=lambda c: (-c["population"], ascii_fold(c["name"]), c["geonameid"]))
        for c in lst[:3]:
            chosen[c["geonameid"]] = c
        for c in lst:
            if c["population"] >= 1_000_000 and len([x for x in chosen.values() if x["countrycode"] == cc]) < 6:
                chosen[c["geonameid"]] = c
            if c["geonameid"] in caps:
                chosen[c["geonameid"]] = c
    # a row below the 1000 threshold and an Antarctic station exercise the load report
    sel = sorted(chosen.values(), key=lambda c: c["geonameid"])
    rows = [row(c, countries, caps) for c in sel]
    rows.append(["9999001", "Tinyville", "Tinyville", "", "P", "PPL", "FR", "France", "", "", "", "", "",
                 "999", "", "", "Europe/Paris", "2023-01-01", "France", "45.0, 3.0"])
    rows.append(["9999002", "McMurdo Station", "McMurdo Station", "", "P", "PPL", "AQ", "Antarctica", "",
                 "", "", "", "", "1258", "", "", "Antarctica/McMurdo", "2023-01-01", "Antarctica", "-77.846, 166.676"])
    rows.append(["9999003", "Broken", "Broken", "", "P", "PPL", "FR", "France", "", "", "", "", "",
                 "5000", "", "", "Europe/Paris", "2023-01-01", "France", "not-a-coordinate"])
    write_csv(os.path.join(ROOT, "mini", "gazetteer.csv"), rows)
    return sel


def embeddings(sel, model_id, dim, seed, noise, extraction):
    rng = np.random.default_rng(seed)
    basis = rng.normal(size=(3, dim))
    offsets = {k: rng.normal(size=dim) for k in ISOLATION}
    d = os.path.join(ROOT, "mini", "embeddings")
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, f"{model_id}.manifest.json"), "w") as f:
        json.dump({
            "model_id": model_id, "dimension": dim, "count": len(sel),
            "pooling": extraction[0], "layer": extraction[1], "extraction_version": "fixture-1",
        }, f, indent=2)
        f.write("\n")
    with open(os.path.join(d, f"{model_id}.jsonl"), "w") as f:
        for c in sel:
            k = CONTINENT_OF[c["countrycode"]]
            v = 4.0 * unit_xyz(c["latitude"], c["longitude"]) @ basis
            v += ISOLATION[k] * offsets[k] + noise * rng.normal(size=dim)
            v += 6.0
            f.write(json.dumps({"key": c["geonameid"], "vector": [float(x) for x in v]}) + "\n")


def responses(sel, countries, caps, model_id, family, seed):
    rng = np.random.default_rng(seed)
    d = os.path.join(ROOT, "mini", "responses")
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, f"{model_id}.jsonl"), "w") as f:
        for c in sel:
            if c["geonameid"] not in caps:
                continue
            cc = c["countrycode"]
            name = countries[cc]["name"]
            roll = rng.random()
            if roll < 0.65:
                ans = name.lower().split()[0] if family == "masked" else name + "."
            elif roll < 0.85:
                ans = c["name"].lower() if family == "masked" else c["name"]
            else:
                ans = "the" if family == "masked" else "I am not sure."
            f.write(json.dumps({"probe_id": f"{family}-{c['geonameid']}", "raw_answer": ans}) + "\n")


def chat_vocab(sel):
    toks = ["<s>", "</s>", "<unk>", "Ġthe", "Ġof", "ing", "ĠParis", "ĠLondon", "ĠBerlin", "ĠTokyo",
            "ĠSydney", "ĠBath", "Ġrome", "ĠMadrid", "ĠLima", "ĠCairo", "ĠDelhi", "agos", "Ġ", "Lagos"]
    d = os.path.join(ROOT, "mini", "vocab")
    os.makedirs(d, exist_ok=True)
    with open(os.path.join(d, "chatlike.json"), "w") as f:
        json.dump({t: i for i, t in enumerate(toks)}, f, indent=1, ensure_ascii=False)
        f.write("\n")


def main():
    cities, countries = load()
    caps = capitals(cities, countries)
    big = [c for c in cities if c["population"] >= 100_000 or c["geonameid"] in caps]
    big.sort(key=lambda c: c["geonameid"])
    write_csv(os.path.join(ROOT, "geonames", "cities-100k-and-capitals.csv"),
              [row(c, countries, caps) for c in big])
    sel = mini(cities, countries, caps)
    embeddings(sel, "bertlike", 48, 7, 0.35, ("mean_subtokens", "last_hidden"))
    embeddings(sel, "chatlike", 64, 11, 0.8, ("provider", "provider"))
    responses(sel, countries, caps, "bertlike", "masked", 3)
    responses(sel, countries, caps, "chatlike", "chat", 5)
    chat_vocab(sel)


if __name__ == "__main__":
    main()
