(function (win, doc, tag, src, name) {
  win["GoogleAnalyticsObject"] = name;
  win[name] = win[name] || function () {
    (win[name].q = win[name].q || []).push(arguments);
  };
  win[name].l = 1 * new Date();
  var el = doc.createElement(tag);
  var first = doc.getElementsByTagName(tag)[0];
  el.async = 1;
  el.src = src;
  first.parentNode.insertBefore(el, first);
})(window, document, "script", "https://collector.invalid/tag.js", "ga");

ga("create", "UA-000000-1", "auto");
ga("send", "pageview");
