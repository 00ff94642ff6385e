from __future__ import annotations

from mmcorpus.extract import (TagPolicy, extract_document, normalize_ws,
                              resolve_url)
from mmcorpus.model import TextNode
from mmcorpus.warc import WarcRecordRef


def record(html: str | bytes, url: str = "https://a.example/x/page.html",
           content_type: str = "text/html", pad_to: int = 600) -> WarcRecordRef:
    payload = html.encode("utf-8") if isinstance(html, str) else html
    if len(payload) < pad_to:
        payload += b"\n<!-- " + b"pad " * ((pad_to - len(payload)) // 4 + 1) + b"-->"
    return WarcRecordRef(
        record_id="<urn:uuid:test>",
        target_uri=url,
        payload=payload,
        content_type=content_type,
        http_status=200,
    )


def kinds(doc):
    return [
        ("text", n.text) if isinstance(n, TextNode) else ("img", n.url)
        for n in doc.nodes
    ]


def test_dfs_interleaving_order():
    doc, reason = extract_document(
        record('<p>hello</p><img src="a.jpg"><p>x</p><p>y</p>')
    )
    assert reason is None
    assert kinds(doc) == [
        ("text", "hello"),
        ("img", "https://a.example/x/a.jpg"),
        ("text", "x"),
        ("text", "y"),
    ]


def test_payload_size_gate_boundary():
    html = b"<p>a</p><p>b</p><p>c</p>"
    payload_499 = html + b"#" * (499 - len(html))
    payload_500 = html + b"#" * (500 - len(html))
    doc, reason = extract_document(record(payload_499, pad_to=0))
    assert doc is None and reason == "too_small"
    doc, reason = extract_document(record(payload_500, pad_to=0))
    assert doc is not None


def test_text_node_count_gate():
    doc, reason = extract_document(record("<p>a</p><p>b</p>"))
    assert doc is None and reason == "too_few_text_nodes"
    doc, reason = extract_document(record("<p>a</p><p>b</p><p>c</p>"))
    assert doc is not None


def test_image_count_gate():
    base = "<p>a</p><p>b</p><p>c</p>"
    img30 = base + '<img src="i.png">' * 30
    img31 = base + '<img src="i.png">' * 31
    doc, reason = extract_document(record(img30))
    assert doc is not None and len(doc.image_nodes()) == 30
    doc, reason = extract_document(record(img31))
    assert doc is None and reason == "too_many_images"


def test_table_subtree_contributes_nothing():
    html = ('<p>keep</p><table><tr><td><p>dropme</p>'
            '<img src="intable.png"></td></tr></table><p>b</p><p>c</p>')
    doc, _ = extract_document(record(html))
    texts = [n.text for n in doc.text_nodes()]
    assert texts == ["keep", "b", "c"]
    assert doc.image_nodes() == []


def test_table_inside_allowed_tag_excluded_from_text():
    html = "<ul>before<table><tr><td>inside</td></tr></table>after</ul><p>b</p><p>c</p>"
    doc, _ = extract_document(record(html))
    assert doc.text_nodes()[0].text == "before after"


def test_nested_allowed_tags_emit_once_at_outermost():
    html = "<ul><li>a</li><dl><dd>b</dd></dl></ul><p>x</p><p>y</p>"
    doc, _ = extract_document(record(html))
    assert [n.text for n in doc.text_nodes()] == ["a b", "x", "y"]


def test_images_inside_allowed_tag_follow_their_text_node():
    html = '<p>one <img src="in.png"> two</p><p>b</p><p>c</p>'
    doc, _ = extract_document(record(html))
    assert kinds(doc)[:2] == [
        ("text", "one two"),
        ("img", "https://a.example/x/in.png"),
    ]


def test_meta_description_emitted():
    html = ('<head><meta name="description" content="  a   summary ">'
            "</head><body><p>a</p><p>b</p><p>c</p></body>")
    doc, _ = extract_document(record(html))
    first = doc.text_nodes()[0]
    assert first.tag == "description" and first.text == "a summary"


def test_script_and_style_text_never_extracted():
    html = ("<p>keep <script>var x = 'no';</script>me</p>"
            "<style>p{color:red}</style><p>b</p><p>c</p>")
    doc, _ = extract_document(record(html))
    assert doc.text_nodes()[0].text == "keep me"


def test_whitespace_normalized():
    doc, _ = extract_document(record("<p>a\t\t b\n\nc </p><p>b</p><p>c</p>"))
    assert doc.text_nodes()[0].text == "a b c"
    assert normalize_ws("  x  y  ") == "x y"


def test_declared_charset_honored():
    html = "<p>café crème</p><p>b</p><p>c</p>".encode("latin-1")
    rec = record(html, content_type="text/html; charset=iso-8859-1", pad_to=0)
    rec = WarcRecordRef(rec.record_id, rec.target_uri,
                        rec.payload + b"<!--" + b"p" * 600 + b"-->",
                        rec.content_type, 200)
    doc, _ = extract_document(rec)
    assert doc.text_nodes()[0].text == "café crème"


def test_meta_charset_sniffed():
    body = '<meta charset="utf-16"><p>ab</p>'.encode("utf-16")
    rec = WarcRecordRef("<urn:uuid:t>", "https://a.test/", body + b"\x00" * 600,
                        "text/html", 200)
    doc, reason = extract_document(rec)
    # utf-16 decodes; gate failure (1 text node) proves parsing didn't abort
    assert reason == "too_few_text_nodes"


def test_bad_bytes_never_abort():
    payload = b"<p>ok\xff\xfe</p><p>b</p><p>c</p>" + b"<!--" + b"x" * 600 + b"-->"
    rec = WarcRecordRef("<urn:uuid:t>", "https://a.test/", payload, "text/html", 200)
    doc, reason = extract_document(rec)
    assert doc is not None


def test_malformed_html_tolerated():
    html = "<p>a<p>b</div></p><ul><li>c<p>d"
    doc, reason = extract_document(record(html))
    assert doc is not None and len(doc.text_nodes()) >= 3


def test_determinism():
    rec = record('<p>hello</p><img src="a.jpg"><p>x</p><p>y</p>')
    d1, _ = extract_document(rec)
    d2, _ = extract_document(rec)
    assert d1 == d2 and d1.id == d2.id


def test_data_and_javascript_srcs_skipped():
    html = ('<p>a</p><img src="data:image/png;base64,AAAA">'
            '<img src="javascript:alert(1)"><img src="ok.png"><p>b</p><p>c</p>')
    doc, _ = extract_document(record(html))
    assert [n.url for n in doc.image_nodes()] == ["https://a.example/x/ok.png"]


def test_resolve_url_cases():
    assert resolve_url("https://a.example/x/", "../i.png") == "https://a.example/i.png"
    assert resolve_url("https://a.example/x/", "https://b.example/i.png") == "https://b.example/i.png"
    assert resolve_url("https://a.example/", "data:image/png;base64,x") is None
    assert resolve_url("https://a.example/", "javascript:void(0)") is None
    assert resolve_url("", "i.png") is None
    assert resolve_url("not a url", "i.png") is None
    assert resolve_url("https://a.example/x/", "") is None


def test_custom_tag_policy():
    policy = TagPolicy(text_allow=frozenset({"p"}), drop_subtrees=frozenset({"table", "aside"}))
    html = "<aside>nope</aside><p>a</p><p>b</p><p>c</p><h1>not allowed</h1>"
    doc, _ = extract_document(record(html), policy=policy)
    assert [n.text for n in doc.text_nodes()] == ["a", "b", "c"]
