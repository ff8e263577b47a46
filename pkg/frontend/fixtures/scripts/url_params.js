function parseParams(search) {
  const params = {};
  const clean = search.replace(/^\?/, "");
  if (!clean) {
    return params;
  }
  for (const pair of clean.split("&")) {
    const [key, value = ""] = pair.split("=");
    params[decodeURIComponent(key)] = decodeURIComponent(value);
  }
  return params;
}

const { utm_source: source, utm_medium: medium } = parseParams(location.search);
