def read_query(raw):
    text = raw.strip()
    return text
