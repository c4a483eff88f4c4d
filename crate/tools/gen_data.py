#!/usr/bin/env python3
"""Regenerate the bundled data files under crates/core/data/.

Inputs (fetched once, not vendored):
  --world-atlas   countries-50m.json from the `world-atlas` npm package (v2.0.2)
  --bert-vocab    assets/vocab.json from the `bert-tokenizer` npm package (v1.1.8),
                  a SentencePiece-marked rendering of the bert-base-uncased vocabulary

Python deps: pycountry, pycountry_convert.

Outputs:
  continents.csv               ISO alpha-2 -> continent
  country_aliases.tsv          ISO alpha-2 -> accepted answer strings
  countries_50m.geojson        low-resolution country boundaries keyed by iso_a2
  reference/bert-base-uncased-vocab.txt
"""

import argparse
import json
import os
import re

import pycountry
import pycountry_convert as pc

DATA_VERSION = "2024.1"

CONTINENT_CODES = {
    "AF": "Africa",
    "AS": "Asia",
    "EU": "Europe",
    "NA": "NorthAmerica",
    "SA": "SouthAmerica",
    "OC": "Oceania",
    "AN": "Antarctica",
}

CONTINENT_OVERRIDES = {
    "AQ": "Antarctica",
    "TF": "Antarctica",
    "EH": "Africa",
    "PN": "Oceania",
    "SX": "NorthAmerica",
    "TL": "Asia",
    "UM": "Oceania",
    "VA": "Europe",
    "XK": "Europe",
}

EXTRA_ALIASES = {
    "AE": ["uae", "emirates", "united arab emirates"],
    "BA": ["bosnia", "bosnia-herzegovina", "bosnia and herzegovina"],
    "BO": ["bolivia"],
    "BN": ["brunei"],
    "BS": ["bahamas"],
    "CD": ["drc", "dr congo", "democratic republic of congo", "democratic republic of the congo", "congo-kinshasa"],
    "CG": ["congo", "republic of congo", "republic of the congo", "congo-brazzaville", "congo republic"],
    "CI": ["ivory coast", "cote d'ivoire", "côte d'ivoire"],
    "CV": ["cape verde", "cabo verde"],
    "CZ": ["czech republic", "czechia"],
    "FM": ["micronesia", "federated states of micronesia"],
    "GB": ["uk", "u.k", "united kingdom", "britain", "great britain", "england"],
    "GM": ["gambia"],
    "IR": ["iran", "persia"],
    "KP": ["north korea", "dprk"],
    "KR": ["south korea", "korea", "republic of korea"],
    "LA": ["laos", "lao"],
    "MD": ["moldova"],
    "MK": ["north macedonia", "macedonia"],
    "MM": ["myanmar", "burma"],
    "NL": ["netherlands", "holland"],
    "PS": ["palestine", "state of palestine"],
    "RU": ["russia", "russian federation"],
    "SY": ["syria"],
    "SZ": ["eswatini", "swaziland"],
    "TR": ["turkey", "türkiye", "turkiye"],
    "TW": ["taiwan", "republic of china"],
    "TZ": ["tanzania"],
    "US": ["usa", "us", "u.s", "u.s.a", "united states", "united states of america", "america"],
    "VA": ["vatican", "vatican city", "holy see"],
    "VE": ["venezuela"],
    "VN": ["vietnam", "viet nam"],
    "XK": ["kosovo"],
}

# Ambiguous short forms that must not resolve to these codes.
DENIED_ALIASES = {("CD", "congo")}


def normalize(s):
    s = s.strip().lower()
    s = re.sub(r"\s+", " ", s)
    s = s.rstrip(".!?,;:")
    if s.startswith("the "):
        s = s[4:]
    return s.strip()


def continent_for(alpha2):
    if alpha2 in CONTINENT_OVERRIDES:
        return CONTINENT_OVERRIDES[alpha2]
    return CONTINENT_CODES[pc.country_alpha2_to_continent_code(alpha2)]


def aliases_for(country):
    names = []
    for attr in ("name", "official_name", "common_name"):
        v = getattr(country, attr, None)
        if v:
            names.append(v)
            if ", " in v:
                names.append(v.split(", ")[0])
            if " (" in v:
                names.append(v.split(" (")[0])
    names += EXTRA_ALIASES.get(country.alpha_2, [])
    seen = []
    for n in names:
        n = normalize(n)
        if not n or ", " in n or (country.alpha_2, n) in DENIED_ALIASES:
            continue
        if n not in seen:
            seen.append(n)
    return seen


def countries():
    out = {c.alpha_2: c for c in pycountry.countries}
    return out


def write_tables(out_dir):
    cs = countries()
    rows = sorted(cs)
    with open(os.path.join(out_dir, "continents.csv"), "w") as f:
        f.write(f"# version {DATA_VERSION}; UN M49 regions, transcontinental states by seat of government\n")
        f.write("iso_a2,continent\n")
        for a2 in rows + ["XK"]:
            f.write(f"{a2},{continent_for(a2)}\n")
    with open(os.path.join(out_dir, "country_aliases.tsv"), "w") as f:
        f.write(f"# version {DATA_VERSION}; first alias is the display name\n")
        for a2 in rows:
            f.write(a2 + "\t" + "|".join(aliases_for(cs[a2])) + "\n")
        f.write("XK\tkosovo|republic of kosovo\n")


def decode_arcs(topo):
    sx, sy = topo["transform"]["scale"]
    tx, ty = topo["transform"]["translate"]
    arcs = []
    for arc in topo["arcs"]:
        x = y = 0
        pts = []
        for dx, dy in arc:
            x += dx
            y += dy
            pts.append((x * sx + tx, y * sy + ty))
        arcs.append(pts)
    return arcs


def ring(arcs, idxs):
    pts = []
    for i in idxs:
        seg = arcs[i] if i >= 0 else list(reversed(arcs[~i]))
        if pts:
            seg = seg[1:]
        pts.extend(seg)
    out = []
    for x, y in pts:
        p = [round(x, 2), round(y, 2)]
        if not out or out[-1] != p:
            out.append(p)
    if out and out[0] != out[-1]:
        out.append(out[0])
    return out


def signed_area(r):
    return sum(r[i][0] * r[i + 1][1] - r[i + 1][0] * r[i][1] for i in range(len(r) - 1)) / 2


def polygon(arcs, rings):
    out = []
    for k, idxs in enumerate(rings):
        r = ring(arcs, idxs)
        if len(r) < 4:
            continue
        exterior = k == 0
        if (signed_area(r) > 0) != exterior:
            r.reverse()
        if not exterior and not out:
            continue
        out.append(r)
    return out


def write_geojson(topo_path, out_dir):
    topo = json.load(open(topo_path))
    arcs = decode_arcs(topo)
    features = []
    for g in topo["objects"]["countries"]["geometries"]:
        name = g["properties"]["name"]
        if "id" in g:
            a2 = pycountry.countries.get(numeric=g["id"]).alpha_2
        elif name == "Kosovo":
            a2 = "XK"
        else:
            continue
        if g["type"] == "Polygon":
            polys = [polygon(arcs, g["arcs"])]
        else:
            polys = [polygon(arcs, p) for p in g["arcs"]]
        polys = [p for p in polys if p]
        if not polys:
            continue
        geom = (
            {"type": "Polygon", "coordinates": polys[0]}
            if len(polys) == 1
            else {"type": "MultiPolygon", "coordinates": polys}
        )
        features.append({"a2": a2, "name": name, "geometry": geom})
    features.sort(key=lambda f: f["a2"])
    with open(os.path.join(out_dir, "countries_50m.geojson"), "w") as f:
        f.write('{"type":"FeatureCollection","features":[\n')
        lines = []
        for feat in features:
            lines.append(
                json.dumps(
                    {
                        "type": "Feature",
                        "properties": {"iso_a2": feat["a2"], "name": feat["name"]},
                        "geometry": feat["geometry"],
                    },
                    separators=(",", ":"),
                    ensure_ascii=False,
                )
            )
        f.write(",\n".join(lines))
        f.write("\n]}\n")


def write_vocab(vocab_json, out_dir):
    entries = json.load(open(vocab_json))
    out = []
    for i, tok in enumerate(entries):
        if i == 1 and tok == "▁":
            out.append("[unused0]")
        elif tok.startswith("[") and tok.endswith("]") and len(tok) > 2:
            out.append(tok)
        elif tok.startswith("▁"):
            out.append(tok[1:])
        else:
            out.append("##" + tok)
    os.makedirs(os.path.join(out_dir, "reference"), exist_ok=True)
    with open(os.path.join(out_dir, "reference", "bert-base-uncased-vocab.txt"), "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--world-atlas", required=True)
    ap.add_argument("--bert-vocab", required=True)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data"))
    args = ap.parse_args()
    write_tables(args.out)
    write_geojson(args.world_atlas, args.out)
    write_vocab(args.bert_vocab, args.out)
