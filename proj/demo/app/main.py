from app.counter import Counter
from app.input_layer import read_query
from app.output_layer import render
from app.transform import build_url, index_of_any, normalize


def main(raw):
    query = read_query(raw)
    cleaned = normalize(query)
    url = build_url(cleaned)
    print(render(url))
    pos = index_of_any(url, ["zz", "q=", "//"])
    counter = Counter(pos)
    counter.increment(2)
    try:
        counter.increment(-1)
    except ValueError:
        pass
    return counter


if __name__ == "__main__":
    import sys

    main(sys.argv[1] if len(sys.argv) > 1 else "  XyZzY123 ")
