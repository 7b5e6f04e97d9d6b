import json

import httpx
import pytest

from sketchvec import Canvas, Diagram, make_shape
from sketchvec.gateway import (
    BackendUnavailable,
    CritiqueReport,
    FailureFeedback,
    MalformedModelOutput,
    NO_DIFFERENCES_MARKER,
    OracleGateway,
    RemoteConfig,
    RemoteGateway,
    ScriptedGateway,
    Strategy,
    grammar_reference,
)
from sketchvec.gateway.base import GatewayCallLog
from sketchvec.gateway.prompts import FAILURE_BLOCK_HEADER, critique_prompt
from sketchvec.gateway.remote import extract_json_object
from sketchvec.geometry import structural_distance
from sketchvec.grammar import diff_diagrams, serialize_diagram
from sketchvec.loop import diagram_payload
from sketchvec.render.raster import render_image

CANVAS = Canvas(128, 128)


def scene(*shapes):
    return Diagram(CANVAS, tuple(shapes))


def img(diagram):
    return render_image(diagram, 1)


class TestOracleCritic:
    def test_identical_render_reports_convergence(self):
        target = scene(make_shape("circle", x=64, y=64, scale_x=40, fill_color="red"))
        gw = OracleGateway(target)
        report = gw.critique(img(target), img(target), "instr")
        assert report.converged
        assert NO_DIFFERENCES_MARKER in report.scene_description

    def test_one_missing_shape_is_one_add_suggestion(self):
        target = scene(
            make_shape("circle", x=40, y=64, scale_x=30, fill_color="red"),
            make_shape("rectangle", x=96, y=30, scale_x=30, scale_y=20, fill_color="blue"),
        )
        current = scene(target.shapes[0])
        gw = OracleGateway(target)
        report = gw.critique(img(target), img(current), "instr")
        assert len(report.discrepancies) == 1
        assert "add" in report.suggestions[0].lower()
        # Relative position naming, not coordinates.
        assert any(word in report.suggestions[0] for word in ("top", "middle", "bottom", "center"))

    def test_seven_field_target_capped_at_three(self):
        base = dict(x=40, y=40, scale_x=24, scale_y=24)
        current = scene(
            make_shape("rectangle", fill_color="red", stroke_color="black", rotation=0, **base),
            make_shape("ellipse", x=90, y=90, scale_x=30, scale_y=20, fill_color="green"),
        )
        target = scene(
            make_shape("rectangle", x=52, y=28, scale_x=36, scale_y=16,
                       fill_color="blue", stroke_color="black", rotation=45),
            make_shape("ellipse", x=90, y=90, scale_x=30, scale_y=40, fill_color="green"),
        )
        assert diff_diagrams(current, target).change_count == 7
        gw = OracleGateway(target)
        report = gw.critique(img(target), img(current), "instr")
        assert len(report.discrepancies) == 3
        assert len(report.suggestions) == 3


class TestOracleSynthesizer:
    def _setup(self):
        current = scene(
            make_shape("rectangle", x=40, y=40, scale_x=24, scale_y=24, fill_color="red"),
            make_shape("circle", x=90, y=90, scale_x=20, fill_color="green"),
        )
        target = scene(
            make_shape("rectangle", x=56, y=40, scale_x=24, scale_y=24, fill_color="blue"),
            make_shape("circle", x=90, y=74, scale_x=20, fill_color="green"),
        )
        gw = OracleGateway(target)
        report = gw.critique(img(target), img(current), "instr")
        assert len(report.discrepancies) == 3
        return gw, current, report

    def test_conservative_applies_exactly_one(self):
        gw, current, report = self._setup()
        candidate = gw.synthesize(current, report, Strategy.CONSERVATIVE, "")
        assert diff_diagrams(current, candidate.diagram).change_count == 1

    def test_moderate_applies_about_half(self):
        gw, current, report = self._setup()
        candidate = gw.synthesize(current, report, Strategy.MODERATE, "")
        assert diff_diagrams(current, candidate.diagram).change_count == 2

    def test_aggressive_applies_all(self):
        gw, current, report = self._setup()
        candidate = gw.synthesize(current, report, Strategy.AGGRESSIVE, "")
        assert diff_diagrams(current, candidate.diagram).change_count == 3

    def test_focused_touches_single_shape(self):
        gw, current, report = self._setup()
        candidate = gw.synthesize(current, report, Strategy.FOCUSED, "")
        delta = diff_diagrams(current, candidate.diagram)
        touched = {c.index for c in delta.modified}
        assert len(touched) == 1

    def test_alternative_changes_structure(self):
        gw, current, report = self._setup()
        aggressive = gw.synthesize(current, report, Strategy.AGGRESSIVE, "")
        alternative = gw.synthesize(current, report, Strategy.ALTERNATIVE, "")
        # Same shape multiset, different painter's order.
        assert alternative.diagram.shapes != aggressive.diagram.shapes
        assert sorted(s.to_record().items().__str__() for s in alternative.diagram.shapes) == \
               sorted(s.to_record().items().__str__() for s in aggressive.diagram.shapes)

    def test_candidates_pass_grammar(self):
        gw, current, report = self._setup()
        for strategy in Strategy:
            candidate = gw.synthesize(current, report, strategy, "")
            from sketchvec.grammar import parse_diagram

            assert parse_diagram(serialize_diagram(candidate.diagram), CANVAS) == candidate.diagram


class TestOracleJudge:
    def test_candidate_equal_to_target_wins(self):
        target = scene(make_shape("circle", x=64, y=64, scale_x=40, fill_color="red"))
        current = scene(make_shape("circle", x=30, y=30, scale_x=40, fill_color="red"))
        gw = OracleGateway(target)
        verdict = gw.judge(img(target), img(current), [img(target)])
        assert verdict.selected == 1

    def test_all_worse_reverts(self):
        target = scene(make_shape("circle", x=64, y=64, scale_x=40, fill_color="red"))
        current = scene(make_shape("circle", x=60, y=64, scale_x=40, fill_color="red"))
        worse = scene(make_shape("circle", x=10, y=10, scale_x=40, fill_color="red"))
        gw = OracleGateway(target)
        verdict = gw.judge(img(target), img(current), [img(worse), img(worse)])
        assert verdict.selected == 0

    def test_tie_breaks_to_lowest_index(self):
        target = scene(make_shape("circle", x=64, y=64, scale_x=40, fill_color="red"))
        current = scene(make_shape("circle", x=20, y=64, scale_x=40, fill_color="red"))
        better = scene(make_shape("circle", x=50, y=64, scale_x=40, fill_color="red"))
        gw = OracleGateway(target)
        verdict = gw.judge(img(target), img(current), [img(better), img(better)])
        assert verdict.selected == 1

    def test_judge_matches_bruteforce_argmin(self, rng):
        from conftest import spaced_scene

        for _ in range(25):
            target = spaced_scene(rng, rng.randint(1, 4))
            gw = OracleGateway(target)
            current = spaced_scene(rng, rng.randint(1, 4), target.canvas)
            candidates = [
                spaced_scene(rng, rng.randint(1, 4), target.canvas) for _ in range(4)
            ]
            verdict = gw.judge(img(target), img(current), [img(c) for c in candidates])
            pool = [current] + candidates
            distances = [structural_distance(d, target).value for d in pool]
            expected = min(range(len(pool)), key=lambda i: (distances[i], i))
            assert verdict.selected == expected


class TestOracleInitialProgram:
    def test_description_names_every_shape(self):
        target = scene(
            make_shape("circle", x=20, y=20, scale_x=16, fill_color="red"),
            make_shape("triangle", x=100, y=100, scale_x=30, scale_y=30, fill_color="blue"),
        )
        gw = OracleGateway(target)
        report = gw.describe_initial(img(target), "instr")
        assert report.discrepancies == ()
        assert "circle" in report.scene_description
        assert "triangle" in report.scene_description
        assert "top-left" in report.scene_description

    def test_initial_program_parses_and_has_shapes(self):
        target = scene(
            make_shape("circle", x=20, y=20, scale_x=16, fill_color="red"),
            make_shape("rectangle", x=100, y=40, scale_x=30, scale_y=20),
        )
        gw = OracleGateway(target)
        report = gw.describe_initial(img(target), "instr")
        candidate = gw.synthesize(Diagram(CANVAS), report, Strategy.CONSERVATIVE, "")
        assert len(candidate.diagram.shapes) == 2
        assert [s.shape_type for s in candidate.diagram.shapes] == [
            s.shape_type for s in target.shapes
        ]


class TestScripted:
    def test_replays_candidates_by_strategy(self):
        d1 = scene(make_shape("circle", x=30, y=30, scale_x=20))
        d2 = scene(make_shape("circle", x=60, y=30, scale_x=20))
        records = [
            {"type": "critique", "payload": {"report": {
                "scene_description": "desc", "discrepancies": [], "suggestions": [],
                "raw_response": ""}}, "step": 0},
            {"type": "init_program", "payload": {"diagram": diagram_payload(d1)}, "step": 0},
            {"type": "critique", "payload": {"report": {
                "scene_description": "step1", "discrepancies": ["move"],
                "suggestions": ["move right"], "raw_response": ""}}, "step": 1},
            {"type": "candidate", "payload": {
                "strategy": "moderate", "diagram": diagram_payload(d2), "repair_count": 1},
                "step": 1},
            {"type": "candidate", "payload": {
                "strategy": "conservative", "diagram": diagram_payload(d1), "repair_count": 0},
                "step": 1},
            {"type": "verdict", "payload": {"selected": 1, "rationale": "better"}, "step": 1},
        ]
        gw = ScriptedGateway(records, CANVAS)
        blank = img(Diagram(CANVAS))
        desc = gw.describe_initial(blank, "i")
        assert desc.scene_description == "desc"
        init = gw.synthesize(Diagram(CANVAS), desc, Strategy.CONSERVATIVE, "")
        assert init.diagram == d1
        report = gw.critique(blank, blank, "i")
        assert report.discrepancies == ("move",)
        # Strategy-keyed, not order-keyed.
        conservative = gw.synthesize(d1, report, Strategy.CONSERVATIVE, "")
        moderate = gw.synthesize(d1, report, Strategy.MODERATE, "")
        assert conservative.diagram == d1
        assert moderate.diagram == d2
        assert moderate.repair_count == 1
        verdict = gw.judge(blank, blank, [blank])
        assert verdict.selected == 1

    def test_exhausted_trace_raises(self):
        gw = ScriptedGateway([], CANVAS)
        blank = img(Diagram(CANVAS))
        from sketchvec.gateway import TraceExhausted

        with pytest.raises(TraceExhausted):
            gw.critique(blank, blank, "i")


def mock_remote(responder):
    transport = httpx.MockTransport(responder)
    config = RemoteConfig(
        endpoint="http://model.test/v1/chat",
        retries=3,
        backoff_s=0.0,
    )
    return RemoteGateway(config, transport=transport)


def chat_response(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


class TestRemote:
    def test_describe_initial_happy_path(self):
        def responder(request):
            body = json.loads(request.content)
            assert body["model"] == "critic-model"
            parts = body["messages"][0]["content"]
            assert parts[0]["type"] == "text"
            assert parts[1]["type"] == "image"
            return chat_response(
                'Here you go: {"scene_description": "two boxes", '
                '"discrepancies": [], "suggestions": [], "no_differences": false}'
            )

        gw = mock_remote(responder)
        report = gw.describe_initial(img(Diagram(CANVAS)), "instr")
        assert report.scene_description == "two boxes"

    def test_synthesize_parses_diagram_json(self):
        def responder(request):
            return chat_response('{"shapes": [{"shape_type": "circle", "x": 10}]}')

        gw = mock_remote(responder)
        report = CritiqueReport("desc", ("d",), ("s",))
        candidate = gw.synthesize(
            Diagram(CANVAS), report, Strategy.AGGRESSIVE, grammar_reference(CANVAS)
        )
        assert candidate.diagram.shapes[0].x == 10
        assert candidate.repair_count == 0

    def test_repair_loop_reasks_with_error(self):
        calls = []

        def responder(request):
            calls.append(json.loads(request.content))
            if len(calls) == 1:
                return chat_response('{"shapes": [{"shape_type": "box"}]}')
            return chat_response('{"shapes": [{"shape_type": "rectangle"}]}')

        gw = mock_remote(responder)
        report = CritiqueReport("desc", ("d",), ("s",))
        candidate = gw.synthesize(Diagram(CANVAS), report, Strategy.MODERATE, "")
        assert candidate.diagram.shapes[0].shape_type.value == "rectangle"
        assert candidate.repair_count == 1
        assert len(calls) == 2
        repair_text = json.dumps(calls[1]["messages"][-1])
        assert "violates the grammar" in repair_text

    def test_malformed_after_max_repairs(self):
        def responder(request):
            return chat_response("no json here at all")

        gw = mock_remote(responder)
        with pytest.raises(MalformedModelOutput):
            gw.judge(img(Diagram(CANVAS)), img(Diagram(CANVAS)), [img(Diagram(CANVAS))])

    def test_backend_unavailable_after_retries(self):
        attempts = []

        def responder(request):
            attempts.append(1)
            raise httpx.ConnectError("down")

        gw = mock_remote(responder)
        with pytest.raises(BackendUnavailable):
            gw.describe_initial(img(Diagram(CANVAS)), "instr")
        assert len(attempts) == 3

    def test_retries_on_500_then_succeeds(self):
        attempts = []

        def responder(request):
            attempts.append(1)
            if len(attempts) < 3:
                return httpx.Response(500, text="boom")
            return chat_response('{"selected": 0, "rationale": "keep"}')

        gw = mock_remote(responder)
        verdict = gw.judge(img(Diagram(CANVAS)), img(Diagram(CANVAS)), [img(Diagram(CANVAS))])
        assert verdict.selected == 0
        assert len(attempts) == 3

    def test_judge_range_validation(self):
        def responder(request):
            return chat_response('{"selected": 7, "rationale": "??"}')

        gw = mock_remote(responder)
        with pytest.raises(MalformedModelOutput):
            gw.judge(img(Diagram(CANVAS)), img(Diagram(CANVAS)), [img(Diagram(CANVAS))])

    def test_critique_no_differences_marker(self):
        def responder(request):
            return chat_response(
                '{"scene_description": "same", "discrepancies": [], '
                '"suggestions": [], "no_differences": true}'
            )

        gw = mock_remote(responder)
        report = gw.critique(img(Diagram(CANVAS)), img(Diagram(CANVAS)), "instr")
        assert report.converged

    def test_discrepancies_capped_at_three(self):
        def responder(request):
            return chat_response(json.dumps({
                "scene_description": "busy",
                "discrepancies": ["a", "b", "c", "d", "e"],
                "suggestions": ["1", "2", "3", "4", "5"],
                "no_differences": False,
            }))

        gw = mock_remote(responder)
        report = gw.critique(img(Diagram(CANVAS)), img(Diagram(CANVAS)), "instr")
        assert len(report.discrepancies) == 3
        assert len(report.suggestions) == 3

    def test_call_log_captures_prompt(self):
        def responder(request):
            return chat_response(
                '{"scene_description": "s", "discrepancies": ["x"], '
                '"suggestions": ["y"], "no_differences": false}'
            )

        gw = mock_remote(responder)
        gw.call_log = GatewayCallLog()
        failures = [FailureFeedback(1, ("bad idea",), ("delta",))]
        gw.critique(img(Diagram(CANVAS)), img(Diagram(CANVAS)), "instr", failures)
        assert len(gw.call_log.critique_prompts) == 1
        assert "bad idea" in gw.call_log.critique_prompts[0]


class TestPrompts:
    def test_failure_blocks_embedded_verbatim(self):
        failures = [
            FailureFeedback(3, ("move the circle",), ("[aggressive] shape 0: x 10 -> 20",)),
            FailureFeedback(4, ("shrink the box",), ()),
        ]
        prompt = critique_prompt("do the thing", failures)
        assert prompt.count(FAILURE_BLOCK_HEADER) == 2
        assert "move the circle" in prompt
        assert "shrink the box" in prompt
        assert "do the thing" in prompt

    def test_grammar_reference_carries_canvas(self):
        text = grammar_reference(Canvas(320, 240))
        assert "320 x 240" in text
        for name in ("circle", "rectangle", "ellipse", "triangle"):
            assert name in text


class TestJsonExtraction:
    def test_first_balanced_object(self):
        text = 'noise {"a": {"b": 1}} trailing {"c": 2}'
        assert extract_json_object(text) == '{"a": {"b": 1}}'

    def test_braces_inside_strings(self):
        text = 'x {"a": "}{", "b": 2} y'
        assert json.loads(extract_json_object(text)) == {"a": "}{", "b": 2}

    def test_no_object_raises(self):
        with pytest.raises(MalformedModelOutput):
            extract_json_object("nothing here")
