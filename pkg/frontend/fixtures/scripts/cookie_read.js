function readCookie(name) {
  var pairs = document.cookie.split("; ");
  for (var i = 0; i < pairs.length; i++) {
    var eq = pairs[i].indexOf("=");
    if (pairs[i].slice(0, eq) === name) {
      return decodeURIComponent(pairs[i].slice(eq + 1));
    }
  }
  return null;
}
