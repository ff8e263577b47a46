function uid() {
  var time = Date.now().toString(36);
  var rand = Math.random().toString(36).slice(2, 10);
  return time + "-" + rand;
}

var sessionId = uid();
