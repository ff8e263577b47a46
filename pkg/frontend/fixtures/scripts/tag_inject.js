(function () {
  var script = document.createElement("script");
  script.type = "text/javascript";
  script.async = true;
  script.src = ("https:" === document.location.protocol ? "https://" : "http://") +
    "cdn.collector.invalid/loader.js";
  var anchor = document.getElementsByTagName("script")[0];
  anchor.parentNode.insertBefore(script, anchor);
})();
