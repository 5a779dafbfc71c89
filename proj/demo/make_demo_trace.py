"""Writes traces/demo.jsonl: a hand-authored recording of `app.main.main`
run with the input "  XyZzY123 ".

The events mirror what a line tracer would emit for app/ (values captured
at the end of each line). Regenerate with: python3 make_demo_trace.py
"""
import json
import pathlib

THREAD = "MainThread"
MARKER = "'  XyZzY123 '"
QUERY = "'XyZzY123'"
URL = "'https://search.example.com/?q=XyZzY123'"
GET = "'GET https://search.example.com/?q=XyZzY123'"
STRS = "['zz', 'q=', '//']"

events = []
stack = []
files = {}
next_act = [1]


def emit(kind, line, **fields):
    act = stack[-1]
    record = {"seq": len(events) + 1, "kind": kind, "thread": THREAD, "act": act,
              "loc": {"file": files[act], "line": line}}
    record.update(fields)
    events.append(record)


def call(method, file, line, args, recv=None):
    act = next_act[0]
    next_act[0] += 1
    stack.append(act)
    files[act] = file
    emit("call", line, method=method,
         args=[{"name": n, "repr": r, "is_string": s} for n, r, s in args],
         recv_before=recv)
    return method


def ret(method, line, value=None, is_string=False, recv_after=None):
    emit("return", line, method=method,
         ret=None if value is None else {"repr": value, "is_string": is_string},
         recv_after=recv_after)
    stack.pop()


def throw(method, line, exc_type, msg):
    emit("exception", line, method=method, exc_type=exc_type, msg=msg)
    stack.pop()


def step(line, *binds):
    emit("line", line)
    for var, repr_, is_string, access in binds:
        bind(line, var, repr_, is_string, access)


def bind(line, var, repr_, is_string, access):
    emit("bind", line, var=var, repr=repr_, is_string=is_string, access=access)


R, W = "read", "write"

main = call("app.main.main", "app/main.py", 7, [("raw", MARKER, True)])
step(8)
m = call("app.input_layer.read_query", "app/input_layer.py", 1, [("raw", MARKER, True)])
step(2, ("raw", MARKER, True, R), ("text", QUERY, True, W))
step(3, ("text", QUERY, True, R))
ret(m, 3, QUERY, True)
bind(8, "query", QUERY, True, W)

step(9)
m = call("app.transform.normalize", "app/transform.py", 1, [("text", QUERY, True)])
step(2, ("text", QUERY, True, R), ("cleaned", QUERY, True, W))
step(3, ("cleaned", QUERY, True, R))
ret(m, 3, QUERY, True)
bind(9, "query", QUERY, True, R)
bind(9, "cleaned", QUERY, True, W)

step(10)
m = call("app.transform.build_url", "app/transform.py", 6, [("query", QUERY, True)])
step(7, ("query", QUERY, True, R), ("url", URL, True, W))
step(8, ("url", URL, True, R))
ret(m, 8, URL, True)
bind(10, "cleaned", QUERY, True, R)
bind(10, "url", URL, True, W)

step(11)
m = call("app.output_layer.render", "app/output_layer.py", 1, [("url", URL, True)])
step(2, ("url", URL, True, R), ("line", GET, True, W))
step(3, ("line", GET, True, R))
ret(m, 3, GET, True)
bind(11, "url", URL, True, R)

step(12)
m = call("app.transform.index_of_any", "app/transform.py", 11,
         [("s", URL, True), ("search_strs", STRS, False)])
step(12, ("ret", "-1", False, W))
step(13, ("search_strs", STRS, False, R), ("i", "0", False, W))
step(14, ("s", URL, True, R), ("search_strs", STRS, False, R), ("i", "0", False, R), ("tmp", "-1", False, W))
step(15, ("tmp", "-1", False, R))
step(16)
step(13, ("search_strs", STRS, False, R), ("i", "1", False, W))
step(14, ("s", URL, True, R), ("search_strs", STRS, False, R), ("i", "1", False, R), ("tmp", "28", False, W))
step(15, ("tmp", "28", False, R))
step(17, ("ret", "-1", False, R), ("tmp", "28", False, R))
step(18, ("tmp", "28", False, R), ("ret", "28", False, W))
step(13, ("search_strs", STRS, False, R), ("i", "2", False, W))
step(14, ("s", URL, True, R), ("search_strs", STRS, False, R), ("i", "2", False, R), ("tmp", "6", False, W))
step(15, ("tmp", "6", False, R))
step(17, ("ret", "28", False, R), ("tmp", "6", False, R))
step(18, ("tmp", "6", False, R), ("ret", "6", False, W))
step(13, ("search_strs", STRS, False, R))
step(19, ("ret", "6", False, R))
ret(m, 19, "6", False)
bind(12, "url", URL, True, R)
bind(12, "pos", "6", False, W)

step(13)
m = call("app.counter.Counter.__init__", "app/counter.py", 2, [("start", "6", False)])
step(3, ("start", "6", False, R))
ret(m, 3, None, recv_after="Counter(6)")
bind(13, "pos", "6", False, R)
bind(13, "counter", "Counter(6)", False, W)

step(14)
m = call("app.counter.Counter.increment", "app/counter.py", 5, [("step", "2", False)], recv="Counter(6)")
step(6, ("step", "2", False, R))
step(8, ("step", "2", False, R))
ret(m, 8, None, recv_after="Counter(8)")
bind(14, "counter", "Counter(8)", False, R)

step(15)
step(16)
m = call("app.counter.Counter.increment", "app/counter.py", 5, [("step", "-1", False)], recv="Counter(8)")
step(6, ("step", "-1", False, R))
step(7)
throw(m, 7, "ValueError", "negative step")
step(17)
step(18)
step(19, ("counter", "Counter(8)", False, R))
ret(main, 19, "Counter(8)", False)

out = pathlib.Path(__file__).parent / "traces" / "demo.jsonl"
with out.open("w", newline="\n") as f:
    f.write("# tracelens constructor=__init__\n")
    for record in events:
        f.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")
print(f"wrote {len(events)} events to {out}")
