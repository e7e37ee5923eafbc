"""Domain model: categories, sheets, feedback phrases, chain records."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from stylist.domain import (
    CANONICAL_TRYON_ORDER,
    ArtistReport,
    EvaluationReport,
    GarmentCandidate,
    GarmentCategory,
    GarmentDescription,
    GarmentSpecSheet,
    Gender,
    NegativePromptSet,
    OutfitProposal,
    PromptPair,
    SelectedGarment,
    TryOnStage,
    TryOnState,
    UserRequest,
    canonical_json,
    extract_json_object,
    order_categories,
    parse_prompt_pairs,
    parse_spec_sheet,
    validate_candidate_link,
)
from stylist.errors import (
    ConflictingCategoriesError,
    InvalidUrlError,
    MalformedJsonError,
    SchemaViolationError,
    SubScoreOutOfRangeError,
)
from stylist.imaging import solid_png

ALL_CATEGORIES = list(GarmentCategory)


# ---------------------------------------------------------------------------
# categories and ordering


def test_dressing_order_is_pinned():
    assert [c.value for c in CANONICAL_TRYON_ORDER] == [
        "dress",
        "upper_body",
        "lower_body",
        "shoes",
        "scarf",
        "hat",
        "belt",
        "glasses",
    ]


@given(st.permutations(ALL_CATEGORIES))
def test_order_categories_sorts_any_permutation(shuffled):
    assert order_categories(shuffled) == CANONICAL_TRYON_ORDER


@given(st.lists(st.sampled_from(ALL_CATEGORIES), unique=True, min_size=1))
def test_order_categories_preserves_membership(cats):
    ordered = order_categories(cats)
    assert set(ordered) == set(cats)
    ranks = [c.tryon_rank for c in ordered]
    assert ranks == sorted(ranks)


def test_sheet_names_round_trip():
    for cat in GarmentCategory:
        assert GarmentCategory.from_sheet_name(cat.sheet_name) is cat
    assert GarmentCategory.from_sheet_name("dress") is GarmentCategory.DRESS
    assert GarmentCategory.from_sheet_name("upper_body") is GarmentCategory.UPPER_BODY
    with pytest.raises(SchemaViolationError):
        GarmentCategory.from_sheet_name("poncho")


def test_gender_parsing():
    assert Gender.parse("man") is Gender.MAN
    assert Gender.parse(" Woman ") is Gender.WOMAN
    with pytest.raises(SchemaViolationError):
        Gender.parse("unknown")


# ---------------------------------------------------------------------------
# links


def test_link_normalization_lowercases_host_and_drops_fragment():
    url = "HTTPS://WWW.Amazon.COM/dp/B01?ref=x#frag"
    assert validate_candidate_link(url) == "https://www.amazon.com/dp/B01?ref=x"


def test_link_preserves_path_case_and_query():
    url = "https://www.taobao.com/Item/ABC?id=9&X=Y"
    assert validate_candidate_link(url) == url


@pytest.mark.parametrize("bad", ["", "not a url", "/relative/path", "www.amazon.com/x"])
def test_link_rejects_non_absolute(bad):
    with pytest.raises(InvalidUrlError):
        validate_candidate_link(bad)


def test_canonical_json_is_order_insensitive():
    a = canonical_json({"b": 1, "a": [1, 2]})
    b = canonical_json({"a": [1, 2], "b": 1})
    assert a == b
    assert " " not in a


# ---------------------------------------------------------------------------
# feedback phrases


def test_prompt_pair_rejects_empty_negative():
    with pytest.raises(SchemaViolationError):
        PromptPair("anything", "   ")


def test_prompt_pair_rejects_overlong_phrases():
    with pytest.raises(SchemaViolationError):
        PromptPair("ok", "one two three four")


def test_from_pairs_clips_drops_and_dedups():
    built = NegativePromptSet.from_pairs(
        [
            ("a very long positive phrase", "dark leather boots with straps"),
            ("", "   "),
            ("x", "Dark Leather Boots"),
            ("y", "red scarf"),
        ]
    )
    assert built.negatives == ("dark leather boots", "red scarf")
    assert built.positives[0] == "a very long"


def test_constructor_rejects_duplicate_negatives_outright():
    with pytest.raises(SchemaViolationError):
        NegativePromptSet((PromptPair("a", "blue hat"), PromptPair("b", "Blue Hat")))


def test_merged_is_order_preserving_union():
    first = NegativePromptSet.from_pairs([("p1", "blue hat"), ("p2", "red scarf")])
    second = NegativePromptSet.from_pairs([("p3", "RED scarf"), ("p4", "green belt")])
    merged = first.merged(second)
    assert merged.negatives == ("blue hat", "red scarf", "green belt")
    # the earlier pair wins, keeping its positive
    assert merged.positives == ("p1", "p2", "p4")


@given(
    st.lists(
        st.tuples(st.text(max_size=20), st.text(min_size=1, max_size=20)),
        max_size=10,
    )
)
def test_from_pairs_never_raises_and_never_duplicates(raw):
    built = NegativePromptSet.from_pairs(raw)
    lowered = [n.lower() for n in built.negatives]
    assert len(lowered) == len(set(lowered))
    for phrase in built.negatives + built.positives:
        assert len(phrase.split()) <= 3


def test_negative_set_round_trip():
    original = NegativePromptSet.from_pairs([("silk", "wool"), ("", "fur trim")])
    again = NegativePromptSet.from_dict(original.to_dict())
    assert again == original


# ---------------------------------------------------------------------------
# user request


def test_user_request_validation():
    image = solid_png(96, 96, (1, 2, 3))
    UserRequest("r1", image, "casual looks")
    with pytest.raises(SchemaViolationError):
        UserRequest("", image, "casual looks")
    with pytest.raises(SchemaViolationError):
        UserRequest("r1", image, "   ")
    with pytest.raises(Exception):
        UserRequest("r1", solid_png(32, 96, (0, 0, 0)), "too narrow")


# ---------------------------------------------------------------------------
# spec sheets


def _entries(cats):
    return {
        c: GarmentDescription(f"a fine {c.value} piece", f"{c.value} piece")
        for c in cats
    }


def _sheet(cats, gender=Gender.MAN):
    return GarmentSpecSheet(
        gender=gender, categories=tuple(cats), entries=_entries(cats)
    )


ACCESSORIES = [
    GarmentCategory.SHOES,
    GarmentCategory.SCARF,
    GarmentCategory.HAT,
    GarmentCategory.BELT,
    GarmentCategory.GLASSES,
]


@given(
    st.booleans(),
    st.booleans(),
    st.booleans(),
    st.sets(st.sampled_from(ACCESSORIES)),
)
@settings(max_examples=200)
def test_sheet_legality_rule(dress, upper, lower, accessories):
    cats = list(accessories)
    if dress:
        cats.append(GarmentCategory.DRESS)
    if upper:
        cats.append(GarmentCategory.UPPER_BODY)
    if lower:
        cats.append(GarmentCategory.LOWER_BODY)
    legal = (dress and not upper and not lower) or (
        not dress and upper and lower
    )
    if not cats:
        legal = False
    if legal:
        sheet = _sheet(cats)
        again = GarmentSpecSheet.from_dict(sheet.to_dict())
        assert again == sheet
    else:
        with pytest.raises(SchemaViolationError):
            _sheet(cats) if cats else GarmentSpecSheet(
                gender=Gender.MAN, categories=(), entries={}
            )


def test_dress_with_upper_is_conflicting_specifically():
    with pytest.raises(ConflictingCategoriesError):
        _sheet([GarmentCategory.DRESS, GarmentCategory.UPPER_BODY])


def test_sheet_requires_entry_coverage():
    cats = (GarmentCategory.UPPER_BODY, GarmentCategory.LOWER_BODY)
    with pytest.raises(SchemaViolationError):
        GarmentSpecSheet(
            gender=Gender.MAN,
            categories=cats,
            entries=_entries(cats[:1]),
        )
    with pytest.raises(SchemaViolationError):
        GarmentSpecSheet(
            gender=Gender.MAN,
            categories=cats[:1] + cats[:1],
            entries=_entries(cats[:1]),
        )


def test_sheet_wire_shape():
    sheet = _sheet(
        [GarmentCategory.UPPER_BODY, GarmentCategory.LOWER_BODY, GarmentCategory.HAT]
    )
    wire = sheet.to_sheet_json()
    assert wire["category"] == ["upper body", "lower body", "hat"]
    assert wire["prompts"]["gender"] == "man"
    assert wire["prompts"]["upper body"] == "a fine upper_body piece"
    assert wire["prompts"]["upper body short"] == "upper_body piece"


SHEET_REPLY = json.dumps(
    {
        "category": ["upper body", "lower body", "shoes"],
        "prompts": {
            "gender": "woman",
            "upper body": "cream silk blouse with pearl buttons",
            "upper body short": "cream blouse",
            "lower body": "high waisted black trousers",
            "lower body short": "black trousers",
            "shoes": "black leather loafers",
            "shoes short": "black loafers",
        },
    }
)


def test_parse_spec_sheet_happy_path():
    sheet = parse_spec_sheet(SHEET_REPLY, expert_index=2)
    assert sheet.gender is Gender.WOMAN
    assert sheet.expert_index == 2
    assert [c.value for c in sheet.categories] == ["upper_body", "lower_body", "shoes"]
    assert (
        sheet.description_for(GarmentCategory.SHOES).short_description
        == "black loafers"
    )


def test_parse_spec_sheet_tolerates_prose_and_fences():
    text = "Sure! Here is the outfit:\n```json\n" + SHEET_REPLY + "\n```\nEnjoy."
    sheet = parse_spec_sheet(text)
    assert len(sheet.categories) == 3


def test_parse_spec_sheet_accepts_alternate_spellings():
    reply = json.dumps(
        {
            "category": ["dresses", "hat"],
            "prompts": {
                "gender": "woman",
                "dress": "an emerald wrap dress in crepe",
                "dresses short": "emerald dress",
                "hat": "a wide brim straw hat",
                "hat short": "straw hat",
            },
        }
    )
    sheet = parse_spec_sheet(reply)
    assert GarmentCategory.DRESS in sheet.categories
    assert sheet.description_for(GarmentCategory.DRESS).short_description == (
        "emerald dress"
    )


def test_parse_spec_sheet_rejects_missing_description():
    reply = json.dumps(
        {
            "category": ["upper body", "lower body"],
            "prompts": {
                "gender": "man",
                "upper body": "a linen shirt",
                "upper body short": "linen shirt",
                "lower body short": "shorts",
            },
        }
    )
    with pytest.raises(SchemaViolationError):
        parse_spec_sheet(reply)


def test_parse_spec_sheet_rejects_conflicting_combination():
    reply = json.dumps(
        {
            "category": ["dresses", "upper body", "lower body"],
            "prompts": {
                "gender": "woman",
                "dresses": "a dress",
                "dresses short": "dress",
                "upper body": "a top",
                "upper body short": "top",
                "lower body": "a skirt",
                "lower body short": "skirt",
            },
        }
    )
    with pytest.raises(ConflictingCategoriesError):
        parse_spec_sheet(reply)


def test_parse_spec_sheet_needs_json():
    with pytest.raises(MalformedJsonError):
        parse_spec_sheet("I could not decide on an outfit, sorry.")


# ---------------------------------------------------------------------------
# JSON extraction


def test_extract_skips_unbalanced_and_finds_later_object():
    text = 'noise { broken ... then {"a": 1} trailing'
    assert extract_json_object(text) == {"a": 1}


def test_extract_handles_braces_inside_strings():
    text = 'reply: {"text": "use {curly} braces \\" fine", "n": 2} done'
    assert extract_json_object(text) == {"text": 'use {curly} braces " fine', "n": 2}


def test_extract_returns_first_complete_object():
    text = '{"first": 1} and {"second": 2}'
    assert extract_json_object(text) == {"first": 1}


@given(
    st.dictionaries(
        st.text(min_size=1, max_size=8),
        st.one_of(st.integers(), st.text(max_size=12), st.booleans()),
        max_size=5,
        min_size=1,
    ),
    st.text(max_size=30),
    st.text(max_size=30),
)
def test_extract_recovers_embedded_object(payload, prefix, suffix):
    blob = prefix.replace("{", "(").replace("}", ")") + json.dumps(payload) + suffix
    assert extract_json_object(blob) == payload


# ---------------------------------------------------------------------------
# diagnoser replies


def test_parse_prompt_pairs_spaced_keys():
    reply = '{"positive prompt": ["slim fit"], "negative prompt": ["baggy cut"]}'
    pairs = parse_prompt_pairs(reply)
    assert pairs.negatives == ("baggy cut",)
    assert pairs.positives == ("slim fit",)


def test_parse_prompt_pairs_underscored_and_bare_string():
    reply = '{"positive_prompt": "slim fit", "negative_prompt": "baggy cut"}'
    pairs = parse_prompt_pairs(reply)
    assert pairs.negatives == ("baggy cut",)


def test_parse_prompt_pairs_unbalanced_lists():
    reply = json.dumps(
        {
            "positive prompt": ["only one"],
            "negative prompt": ["first bad", "second bad", "third bad"],
        }
    )
    pairs = parse_prompt_pairs(reply)
    assert pairs.negatives == ("first bad", "second bad", "third bad")
    assert pairs.positives == ("only one", "", "")


def test_parse_prompt_pairs_requires_negative_list():
    with pytest.raises(SchemaViolationError):
        parse_prompt_pairs('{"positive prompt": ["nice things"]}')


# ---------------------------------------------------------------------------
# candidates, proposals, chains


def _candidate(color=(10, 20, 30), link="https://www.amazon.com/dp/x"):
    return GarmentCandidate(image=solid_png(64, 64, color), source_link=link)


def test_candidate_normalizes_link_and_checks_score():
    c = GarmentCandidate(
        image=solid_png(64, 64, (0, 0, 0)),
        source_link="HTTPS://WWW.AMAZON.COM/dp/x#f",
        alignment_score=0.5,
    )
    assert c.source_link == "https://www.amazon.com/dp/x"
    with pytest.raises(SchemaViolationError):
        _candidate().with_score(1.5)


def _selected(cat, score=0.9):
    return SelectedGarment(
        category=cat,
        candidate=_candidate(),
        full_description=f"a {cat.value}",
        short_description=cat.value,
        final_score=score,
        iterations_used=1,
        negatives=NegativePromptSet(),
        satisfied=True,
    )


def _proposal(cats=(GarmentCategory.UPPER_BODY, GarmentCategory.LOWER_BODY)):
    return OutfitProposal(
        sheet=_sheet(list(cats)),
        garments=tuple(_selected(c) for c in cats),
        outfit_score=0.8,
        accepted=True,
    )


def test_proposal_requires_category_coverage():
    sheet = _sheet([GarmentCategory.UPPER_BODY, GarmentCategory.LOWER_BODY])
    with pytest.raises(SchemaViolationError):
        OutfitProposal(
            sheet=sheet,
            garments=(_selected(GarmentCategory.UPPER_BODY),),
            outfit_score=0.8,
            accepted=True,
        )
    with pytest.raises(SchemaViolationError):
        OutfitProposal(
            sheet=sheet,
            garments=(
                _selected(GarmentCategory.UPPER_BODY),
                _selected(GarmentCategory.UPPER_BODY),
            ),
            outfit_score=0.8,
            accepted=True,
        )


def test_proposal_round_trip():
    proposal = _proposal()
    assert OutfitProposal.from_dict(proposal.to_dict()) == proposal


def _stage(cat, input_image, chosen_image):
    return TryOnStage(
        category=cat,
        garment=_selected(cat),
        input_image=input_image,
        chosen_image=chosen_image,
        masked_similarity=0.8,
        regenerations=0,
    )


def test_stage_requires_matching_garment_category():
    img = solid_png(64, 64, (5, 5, 5))
    with pytest.raises(SchemaViolationError):
        TryOnStage(
            category=GarmentCategory.HAT,
            garment=_selected(GarmentCategory.SHOES),
            input_image=img,
            chosen_image=img,
            masked_similarity=0.5,
            regenerations=0,
        )


def test_state_enforces_chaining_and_order():
    a, b, c = (solid_png(64, 64, (i, i, i)) for i in (1, 2, 3))
    upper = _stage(GarmentCategory.UPPER_BODY, a, b)
    lower = _stage(GarmentCategory.LOWER_BODY, b, c)
    state = TryOnState(current_image=a).advanced(upper).advanced(lower)
    assert state.current_image == c
    assert [s.category for s in state.stages] == [
        GarmentCategory.UPPER_BODY,
        GarmentCategory.LOWER_BODY,
    ]

    with pytest.raises(SchemaViolationError):
        TryOnState(current_image=c, stages=(lower, upper))
    broken = _stage(GarmentCategory.LOWER_BODY, a, c)  # skips upper's output
    with pytest.raises(SchemaViolationError):
        TryOnState(current_image=c, stages=(upper, broken))
    with pytest.raises(SchemaViolationError):
        TryOnState(current_image=a, stages=(upper, lower))


def test_state_round_trip():
    a, b = (solid_png(64, 64, (i, i, i)) for i in (1, 2))
    state = TryOnState(current_image=a).advanced(
        _stage(GarmentCategory.UPPER_BODY, a, b)
    )
    assert TryOnState.from_dict(state.to_dict()) == state


# ---------------------------------------------------------------------------
# evaluation types


def test_artist_report_enforces_recomputed_overall():
    report = ArtistReport.from_subscores(7, 8, 8, 9, {"design": "nice"})
    assert report.overall == pytest.approx(8.0)
    with pytest.raises(SchemaViolationError):
        ArtistReport(design=7, fitness=8, coherence=8, mood=9, overall=7.9)
    with pytest.raises(SubScoreOutOfRangeError):
        ArtistReport(design=True, fitness=8, coherence=8, mood=9, overall=6.5)
    with pytest.raises(SubScoreOutOfRangeError):
        ArtistReport(design=0, fitness=8, coherence=8, mood=9, overall=6.25)


def test_artist_report_round_trip():
    report = ArtistReport.from_subscores(3, 4, 5, 6, {"overall comment": "fine"})
    assert ArtistReport.from_dict(report.to_dict()) == report


def test_evaluation_report_ranges():
    EvaluationReport(
        style_consistency=0.5,
        visual_quality=None,
        face_similarity=-0.2,
        artist=None,
        notes={"visual_quality": "backend down"},
    )
    with pytest.raises(SchemaViolationError):
        EvaluationReport(
            style_consistency=1.2,
            visual_quality=None,
            face_similarity=None,
            artist=None,
        )
    with pytest.raises(SchemaViolationError):
        EvaluationReport(
            style_consistency=None,
            visual_quality=None,
            face_similarity=-1.5,
            artist=None,
        )
