def render(url):
    line = "GET " + url
    return line
