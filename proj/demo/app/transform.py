def normalize(text):
    cleaned = text.replace(" ", "+")
    return cleaned


def build_url(query):
    url = "https://search.example.com/?q=" + query
    return url


def index_of_any(s, search_strs):
    ret = -1
    for i in range(len(search_strs)):
        tmp = s.find(search_strs[i])
        if tmp == -1:
            continue
        if ret == -1 or tmp < ret:
            ret = tmp
    return ret
